//! Likelihood intervals from relative likelihood curves, nuisance-parameter
//! profiles at fixed `tc`, and curvature-based intervals for `m`, `ω` and the
//! damping `D`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{CalibrationConfig, CostFunction, solve_linear};
use crate::likelihood::{
    self, FisherBlocks, LikelihoodCurve, LikelihoodError, Parameter, PointFlag, Which,
};
use crate::linalg;
use crate::model::{idx, LpplsParams, NonlinearParams, QualificationIntervals, SymmetricInterval};
use crate::series::PriceSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntervalError {
    #[error("cutoff must lie in (0, 1), got {0}")]
    InvalidCutoff(f64),
    #[error("curve has {0} usable points, at least 3 required")]
    TooFewPoints(usize),
    #[error("no grid point exceeds the cutoff {0}")]
    Empty(f64),
    #[error("information matrix is not invertible (scaled condition number {0:.3e})")]
    NotInvertible(f64),
    #[error("damping transform undefined: B = {b}, |C| = {c}")]
    UndefinedTransform { b: f64, c: f64 },
    #[error("parameter {0:?} is not supported here")]
    WrongParameter(Parameter),
    #[error("tc = {0} lies on an observation time")]
    Singular(f64),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
}

fn check_cutoff(cutoff: f64) -> Result<(), IntervalError> {
    if cutoff > 0.0 && cutoff < 1.0 {
        Ok(())
    } else {
        Err(IntervalError::InvalidCutoff(cutoff))
    }
}

/// Set of parameter values whose relative likelihood exceeds `cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodInterval {
    pub parameter: Parameter,
    pub cutoff: f64,
    /// Disjoint `[lo, hi]` ranges in increasing order.
    pub segments: Vec<[f64; 2]>,
    /// A segment reaches the first or last grid point.
    pub boundary_touched: bool,
}

impl LikelihoodInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.segments.iter().any(|s| s[0] <= x && x <= s[1])
    }

    /// Every segment of `self` lies inside a segment of `outer`.
    pub fn is_within(&self, outer: &LikelihoodInterval) -> bool {
        self.segments
            .iter()
            .all(|s| outer.segments.iter().any(|o| o[0] <= s[0] && s[1] <= o[1]))
    }
}

/// Thresholds a relative likelihood curve at `cutoff`.
///
/// Flagged points are skipped. Segment ends are interpolated linearly
/// between the bracketing grid points; a run reaching the end of the grid
/// stops there and sets `boundary_touched`.
pub fn likelihood_interval(
    curve: &LikelihoodCurve,
    which: Which,
    cutoff: f64,
) -> Result<LikelihoodInterval, IntervalError> {
    check_cutoff(cutoff)?;
    let rel = curve.relative(which);
    let pts: Vec<(f64, f64)> = curve
        .grid
        .iter()
        .zip(rel)
        .filter_map(|(&x, r)| r.map(|r| (x, r)))
        .collect();
    if pts.len() < 3 {
        return Err(IntervalError::TooFewPoints(pts.len()));
    }
    let last = pts.len() - 1;
    let cross = |a: (f64, f64), b: (f64, f64)| a.0 + (cutoff - a.1) / (b.1 - a.1) * (b.0 - a.0);

    let mut segments = Vec::new();
    let mut boundary_touched = false;
    let mut i = 0;
    while i <= last {
        if pts[i].1 <= cutoff {
            i += 1;
            continue;
        }
        let start = i;
        while i < last && pts[i + 1].1 > cutoff {
            i += 1;
        }
        let end = i;
        let lo = if start == 0 {
            boundary_touched = true;
            pts[0].0
        } else {
            cross(pts[start - 1], pts[start])
        };
        let hi = if end == last {
            boundary_touched = true;
            pts[last].0
        } else {
            cross(pts[end], pts[end + 1])
        };
        segments.push([lo, hi]);
        i += 1;
    }
    if segments.is_empty() {
        return Err(IntervalError::Empty(cutoff));
    }
    Ok(LikelihoodInterval {
        parameter: curve.parameter,
        cutoff,
        segments,
        boundary_touched,
    })
}

/// Grid for a nuisance profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ParamGrid {
    pub fn default_m() -> Self {
        Self {
            min: 0.05,
            max: 1.5,
            step: 0.01,
        }
    }

    pub fn default_omega() -> Self {
        Self {
            min: 2.0,
            max: 20.0,
            step: 0.05,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        assert!(self.step > 0.0, "grid step must be positive");
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.min + k as f64 * self.step).collect()
    }
}

fn delete_row_col(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.clone().remove_row(k).remove_column(k)
}

/// Profile and modified profile likelihood of `m` or `ω` at fixed `tc`.
///
/// At each grid value the other nonlinear parameter is searched in one
/// dimension with the amplitudes solved exactly. The modified likelihood
/// uses the reduced gradient and Hessian matrices with the target row and
/// column removed, against the gradients at `mle`.
pub fn nuisance_profile(
    series: &PriceSeries,
    tc: f64,
    which: Parameter,
    grid: &[f64],
    mle: &LpplsParams,
    cfg: &CalibrationConfig,
) -> Result<LikelihoodCurve, IntervalError> {
    let k = match which {
        Parameter::M => idx::M,
        Parameter::Omega => idx::OMEGA,
        other => return Err(IntervalError::WrongParameter(other)),
    };
    let n = series.len();
    let mut cost = CostFunction::new(series, cfg.max_condition);
    if !cost.set_tc(tc) {
        return Err(IntervalError::Singular(tc));
    }
    let (free_bounds, free_step, mut starts): ((f64, f64), f64, Vec<f64>) = if k == idx::M {
        (cfg.omega_bounds, cfg.initial_step.1, vec![4.0, 7.0, 10.0, 13.0, 17.0])
    } else {
        (cfg.m_bounds, cfg.initial_step.0, vec![0.2, 0.5, 0.8])
    };
    let base = starts.len();

    let mut f2 = Vec::with_capacity(grid.len());
    let mut params = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    for &v in grid {
        let mut best: Option<(f64, f64, bool)> = None;
        for &x0 in &starts {
            let r = cfg.nelder_mead.minimize(
                |x| {
                    if k == idx::M {
                        cost.f1(v, x[0])
                    } else {
                        cost.f1(x[0], v)
                    }
                },
                &[x0],
                &[free_step],
                &[free_bounds],
            );
            if best.is_none_or(|b| r.fx < b.1) {
                best = Some((r.x[0], r.fx, r.converged));
            }
        }
        let (free, fx, converged) = best.expect("start set is non-empty");
        let (m, omega) = if k == idx::M { (v, free) } else { (free, v) };
        starts.truncate(base);
        let fit = if fx.is_finite() {
            solve_linear(series, tc, m, omega, cfg.max_condition).ok()
        } else {
            None
        };
        match fit {
            Some(fit) => {
                starts.push(free);
                f2.push(fit.sse);
                params.push(Some(LpplsParams::new(
                    NonlinearParams::new(tc, m, omega),
                    fit.linear,
                    fit.sse / n as f64,
                )));
                flags.push(if !converged {
                    PointFlag::NotConverged
                } else if fit.sse == 0.0 {
                    PointFlag::PerfectFit
                } else {
                    PointFlag::Ok
                });
            }
            None => {
                f2.push(f64::INFINITY);
                params.push(None);
                flags.push(PointFlag::Degenerate);
            }
        }
    }

    let log_lp: Vec<Option<f64>> = f2
        .iter()
        .zip(&flags)
        .map(|(f, fl)| fl.lp_valid().then(|| -(n as f64 / 2.0) * f.ln()))
        .collect();
    let mut log_lm = vec![None; grid.len()];
    for i in 0..grid.len() {
        let (Some(p), PointFlag::Ok) = (&params[i], flags[i]) else {
            continue;
        };
        let result = likelihood::fisher_blocks(series, p).and_then(|fb| {
            let sigma = likelihood::severini_sigma(series, p, mle)?;
            Ok((fb, sigma))
        });
        let (fb, sigma) = match result {
            Ok(v) => v,
            Err(_) => {
                flags[i] = PointFlag::Degenerate;
                continue;
            }
        };
        let curvature = DMatrix::from_iterator(6, 6, fb.curvature().iter().copied());
        let sigma = DMatrix::from_iterator(6, 6, sigma.iter().copied());
        match likelihood::modified_log_likelihood(
            &delete_row_col(&curvature, k),
            &delete_row_col(&sigma, k),
            p.s,
            n,
        ) {
            Ok(v) => log_lm[i] = Some(v),
            Err(f) => flags[i] = f,
        }
    }
    if log_lp.iter().all(Option::is_none) {
        return Err(LikelihoodError::AllFlagged.into());
    }
    Ok(LikelihoodCurve {
        parameter: which,
        n,
        grid: grid.to_vec(),
        f2,
        rel_lp: likelihood::normalize(&log_lp),
        rel_lm: likelihood::normalize(&log_lm),
        log_lp,
        log_lm,
        flags,
    })
}

/// Symmetric curvature-based interval for a nuisance parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceInterval {
    pub parameter: Parameter,
    pub center: f64,
    pub half_width: f64,
    pub cutoff: f64,
}

impl NuisanceInterval {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn symmetric(&self) -> SymmetricInterval {
        SymmetricInterval {
            center: self.center,
            half_width: self.half_width,
        }
    }
}

/// `sqrt(−2 ln c)`, the half-width multiplier of a unit-variance interval.
pub fn cutoff_multiplier(cutoff: f64) -> f64 {
    (-2.0 * cutoff.ln()).sqrt()
}

fn invert(info: &DMatrix<f64>) -> Result<DMatrix<f64>, IntervalError> {
    linalg::spd_inverse(info).ok_or_else(|| IntervalError::NotInvertible(linalg::scaled_condition(info)))
}

/// `Δ = sqrt(−2 ln c · [I⁻¹]_jj)` for `m` or `ω` from the observed
/// information at the subordinated optimum.
pub fn approx_nuisance_interval(
    fisher: &FisherBlocks,
    which: Parameter,
    cutoff: f64,
) -> Result<NuisanceInterval, IntervalError> {
    check_cutoff(cutoff)?;
    let (j, center) = match which {
        Parameter::M => (idx::M, fisher.params.nonlinear.m),
        Parameter::Omega => (idx::OMEGA, fisher.params.nonlinear.omega),
        other => return Err(IntervalError::WrongParameter(other)),
    };
    let cov = invert(&fisher.information())?;
    Ok(NuisanceInterval {
        parameter: which,
        center,
        half_width: cutoff_multiplier(cutoff) * cov[(j, j)].sqrt(),
        cutoff,
    })
}

/// Jacobian `∂η/∂ζ` of `ζ = (D, ω, A, B, C1, C2, s) ↦ η = (m, ω, A, B, C1, C2, s)`
/// with `m = Dω|C|/|B|`.
pub fn damping_jacobian(params: &LpplsParams) -> Result<DMatrix<f64>, IntervalError> {
    let omega = params.nonlinear.omega;
    let b = params.linear.b;
    let (c1, c2) = (params.linear.c1, params.linear.c2);
    let c = params.linear.c();
    if b == 0.0 || c == 0.0 {
        return Err(IntervalError::UndefinedTransform { b, c });
    }
    let d = params.damping();
    let ab = b.abs();
    let mut j = DMatrix::identity(7, 7);
    j[(0, 0)] = omega * c / ab;
    j[(0, 1)] = d * c / ab;
    j[(0, 2)] = 0.0;
    j[(0, 3)] = -d * omega * c / (b * ab);
    j[(0, 4)] = d * omega * c1 / (ab * c);
    j[(0, 5)] = d * omega * c2 / (ab * c);
    j[(0, 6)] = 0.0;
    Ok(j)
}

/// Interval for `D` from the information transformed to `(D, ω, A, B, C1, C2, s)`.
pub fn damping_interval(fisher: &FisherBlocks, cutoff: f64) -> Result<NuisanceInterval, IntervalError> {
    check_cutoff(cutoff)?;
    let j = damping_jacobian(&fisher.params)?;
    let info = j.transpose() * fisher.information() * &j;
    let cov = invert(&info)?;
    Ok(NuisanceInterval {
        parameter: Parameter::Damping,
        center: fisher.params.damping(),
        half_width: cutoff_multiplier(cutoff) * cov[(0, 0)].sqrt(),
        cutoff,
    })
}

/// Intervals for `m`, `ω` and `D` as consumed by confidence-aware filtering.
/// The damping interval is omitted when `|C| = 0` (unbounded damping).
pub fn qualification_intervals(
    fisher: &FisherBlocks,
    cutoff: f64,
) -> Result<QualificationIntervals, IntervalError> {
    let m = approx_nuisance_interval(fisher, Parameter::M, cutoff)?;
    let omega = approx_nuisance_interval(fisher, Parameter::Omega, cutoff)?;
    let damping = match damping_interval(fisher, cutoff) {
        Ok(d) => Some(d.symmetric()),
        Err(IntervalError::UndefinedTransform { c, .. }) if c == 0.0 => None,
        Err(e) => return Err(e),
    };
    Ok(QualificationIntervals {
        m: m.symmetric(),
        omega: omega.symmetric(),
        damping,
    })
}
