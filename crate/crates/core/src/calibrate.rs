//! Least-squares calibration with the linear amplitudes slaved to the
//! nonlinear parameters.
//!
//! For fixed `(tc, m, ω)` the amplitudes `(A, B, C1, C2)` solve a 4×4 normal
//! system exactly, which leaves a cost `F1(tc, m, ω)` to search over two
//! dimensions. Minimizing it at each `tc` gives the profile `F2(tc)`.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::model::{
    self, ConstraintBounds, FilterMode, LinearParams, LpplsParams, NonlinearParams,
    QualificationFlags, SINGULARITY_GUARD,
};
use crate::optimize::NelderMeadConfig;
use crate::series::PriceSeries;

/// Smallest window the linear solve accepts.
pub const MIN_LINEAR_OBSERVATIONS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrateError {
    #[error("window has {0} observations, at least {MIN_LINEAR_OBSERVATIONS} required")]
    TooFewObservations(usize),
    #[error("tc = {0} lies on an observation time")]
    Singular(f64),
    #[error("degenerate design: normal matrix condition number {0:.3e}")]
    Degenerate(f64),
    #[error("tc grid is empty")]
    EmptyGrid,
    #[error("no grid point produced a finite cost")]
    NoValidPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// `(m, ω)` starting points for the multistart search.
    pub starts: Vec<(f64, f64)>,
    pub m_bounds: (f64, f64),
    pub omega_bounds: (f64, f64),
    /// Initial simplex edge lengths in `(m, ω)`.
    pub initial_step: (f64, f64),
    pub nelder_mead: NelderMeadConfig,
    /// Largest accepted condition number of the (diagonally scaled) normal matrix.
    pub max_condition: f64,
    /// Seed each profile point with the previous point's optimum.
    pub warm_start: bool,
    /// Finish the full MLE with a damped Gauss–Newton pass on all seven parameters.
    pub refine: bool,
    pub bounds: ConstraintBounds,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        let starts = [0.2, 0.5, 0.8]
            .iter()
            .flat_map(|&m| [4.0, 7.0, 10.0, 13.0, 17.0].map(|w| (m, w)))
            .collect();
        Self {
            starts,
            m_bounds: (0.01, 1.99),
            omega_bounds: (1.0, 50.0),
            initial_step: (0.1, 1.0),
            nelder_mead: NelderMeadConfig::default(),
            max_condition: 1e12,
            warm_start: true,
            refine: true,
            bounds: ConstraintBounds::default(),
        }
    }
}

/// Grid of `tc` offsets from the window end, in whole days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcRange {
    pub min_offset: i64,
    pub max_offset: i64,
    pub step: i64,
}

impl Default for TcRange {
    fn default() -> Self {
        Self {
            min_offset: -50,
            max_offset: 150,
            step: 1,
        }
    }
}

impl TcRange {
    pub fn offsets(&self) -> Vec<i64> {
        assert!(self.step > 0, "tc step must be positive");
        (0..)
            .map(|k| self.min_offset + k * self.step)
            .take_while(|o| *o <= self.max_offset)
            .collect()
    }

    /// Numeric `tc` values `t2 + offset + 0.5`. The half-day shift keeps the
    /// grid off integer observation times.
    pub fn grid(&self, t2: f64) -> Vec<f64> {
        self.offsets()
            .into_iter()
            .map(|o| t2 + o as f64 + 0.5)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub linear: LinearParams,
    pub sse: f64,
    pub condition_number: f64,
}

/// Cost evaluator for one window; caches `ln|tc - t_i|` for the current `tc`.
pub struct CostFunction<'a> {
    t: &'a [f64],
    y: &'a [f64],
    tc: f64,
    ln_dist: Vec<f64>,
    basis: Vec<[f64; 3]>,
    max_condition: f64,
}

impl<'a> CostFunction<'a> {
    pub fn new(series: &'a PriceSeries, max_condition: f64) -> Self {
        let n = series.len();
        Self {
            t: series.times(),
            y: series.log_prices(),
            tc: f64::NAN,
            ln_dist: vec![0.0; n],
            basis: vec![[0.0; 3]; n],
            max_condition,
        }
    }

    /// Moves to a new `tc`; returns `false` when it sits on an observation.
    pub fn set_tc(&mut self, tc: f64) -> bool {
        if tc == self.tc {
            return true;
        }
        self.tc = tc;
        let mut ok = true;
        for (l, &t) in self.ln_dist.iter_mut().zip(self.t) {
            let d = (tc - t).abs();
            if d < SINGULARITY_GUARD {
                ok = false;
            }
            *l = d.ln();
        }
        if !ok {
            self.tc = f64::NAN;
        }
        ok
    }

    /// Builds the basis for `(m, ω)` and solves the normal equations.
    /// Returns `None` when the normal matrix is not safely positive definite.
    fn normal_solve(&mut self, m: f64, omega: f64) -> Option<(Vector4<f64>, f64)> {
        let mut s = [0.0f64; 14];
        for ((b, &l), &y) in self.basis.iter_mut().zip(&self.ln_dist).zip(self.y) {
            let f = (m * l).exp();
            let (sin, cos) = (omega * l).sin_cos();
            let g = f * cos;
            let h = f * sin;
            *b = [f, g, h];
            s[0] += f;
            s[1] += g;
            s[2] += h;
            s[3] += f * f;
            s[4] += f * g;
            s[5] += f * h;
            s[6] += g * g;
            s[7] += g * h;
            s[8] += h * h;
            s[9] += y;
            s[10] += f * y;
            s[11] += g * y;
            s[12] += h * y;
        }
        s[13] = self.y.len() as f64;
        #[rustfmt::skip]
        let normal = Matrix4::new(
            s[13], s[0], s[1], s[2],
            s[0],  s[3], s[4], s[5],
            s[1],  s[4], s[6], s[7],
            s[2],  s[5], s[7], s[8],
        );
        let rhs = Vector4::new(s[9], s[10], s[11], s[12]);
        let d = Vector4::from_fn(|i, _| {
            let v = normal[(i, i)];
            if v > 0.0 && v.is_finite() {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        });
        let scaled = Matrix4::from_fn(|i, j| d[i] * normal[(i, j)] * d[j]);
        let chol = scaled.cholesky()?;
        let l = chol.l_dirty();
        let (mut lmin, mut lmax) = (f64::INFINITY, 0.0f64);
        for i in 0..4 {
            lmin = lmin.min(l[(i, i)]);
            lmax = lmax.max(l[(i, i)]);
        }
        // (max/min pivot)^2 bounds the condition number from below
        let cond_lower = (lmax / lmin).powi(2);
        if !(cond_lower <= self.max_condition) {
            return None;
        }
        let z = chol.solve(&rhs.component_mul(&d));
        Some((z.component_mul(&d), cond_lower))
    }

    fn sse_with(&self, beta: &Vector4<f64>) -> f64 {
        let mut sse = 0.0;
        for (b, &y) in self.basis.iter().zip(self.y) {
            let r = y - beta[0] - beta[1] * b[0] - beta[2] * b[1] - beta[3] * b[2];
            sse += r * r;
        }
        sse
    }

    /// `F1(tc, m, ω)` at the current `tc`; `+inf` for degenerate designs.
    pub fn f1(&mut self, m: f64, omega: f64) -> f64 {
        if self.tc.is_nan() {
            return f64::INFINITY;
        }
        match self.normal_solve(m, omega) {
            Some((beta, _)) if beta.iter().all(|v| v.is_finite()) => self.sse_with(&beta),
            _ => f64::INFINITY,
        }
    }

    /// `F1` with `tc` free as well.
    pub fn f1_at(&mut self, tc: f64, m: f64, omega: f64) -> f64 {
        if !self.set_tc(tc) {
            return f64::INFINITY;
        }
        self.f1(m, omega)
    }
}

/// Exact linear amplitudes and residual SSE at fixed `(tc, m, ω)`.
///
/// The amplitudes come from a QR factorization of the `n×4` design for
/// accuracy; the condition number reported is that of the diagonally scaled
/// normal matrix.
pub fn solve_linear(
    series: &PriceSeries,
    tc: f64,
    m: f64,
    omega: f64,
    max_condition: f64,
) -> Result<LinearFit, CalibrateError> {
    let n = series.len();
    if n < MIN_LINEAR_OBSERVATIONS {
        return Err(CalibrateError::TooFewObservations(n));
    }
    let mut x = DMatrix::zeros(n, 4);
    for (i, &t) in series.times().iter().enumerate() {
        let b = model::basis(t, tc, m, omega).map_err(|_| CalibrateError::Singular(tc))?;
        x[(i, 0)] = 1.0;
        x[(i, 1)] = b.f;
        x[(i, 2)] = b.g;
        x[(i, 3)] = b.h;
    }
    let normal = x.transpose() * &x;
    let condition_number = linalg::scaled_condition(&normal);
    if !(condition_number <= max_condition) {
        return Err(CalibrateError::Degenerate(condition_number));
    }
    let y = DVector::from_column_slice(series.log_prices());
    // column scaling keeps the QR well balanced
    let scale = DVector::from_iterator(
        4,
        (0..4).map(|j| {
            let norm = x.column(j).norm();
            if norm > 0.0 {
                1.0 / norm
            } else {
                1.0
            }
        }),
    );
    let xs = DMatrix::from_fn(n, 4, |i, j| x[(i, j)] * scale[j]);
    let qr = xs.qr();
    let qty = qr.q().transpose() * &y;
    let z = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(CalibrateError::Degenerate(f64::INFINITY))?;
    let beta = z.component_mul(&scale);
    let resid = &y - &x * &beta;
    Ok(LinearFit {
        linear: LinearParams::new(beta[0], beta[1], beta[2], beta[3]),
        sse: resid.norm_squared(),
        condition_number,
    })
}

/// Residuals `y_i - LPPLS(t_i)`.
pub fn residuals(series: &PriceSeries, params: &LpplsParams) -> Result<Vec<f64>, model::ModelError> {
    series
        .times()
        .iter()
        .zip(series.log_prices())
        .map(|(&t, &y)| Ok(y - model::lppls(t, &params.nonlinear, &params.linear)?))
        .collect()
}

/// Profile of the cost at one `tc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub tc: f64,
    /// `F2(tc)`; `+inf` when no start produced a usable design.
    pub f2: f64,
    pub m_hat: f64,
    pub omega_hat: f64,
    pub linear: LinearParams,
    /// Variance estimate `f2 / n`.
    pub s_hat: f64,
    pub n: usize,
    pub converged: bool,
    pub degenerate: bool,
    pub condition_number: f64,
    /// `m̂` or `ω̂` sits on the search box.
    pub at_search_bound: bool,
}

impl ProfilePoint {
    pub fn params(&self) -> LpplsParams {
        LpplsParams::new(
            NonlinearParams::new(self.tc, self.m_hat, self.omega_hat),
            self.linear,
            self.s_hat,
        )
    }

    /// Converged and non-degenerate.
    pub fn usable(&self) -> bool {
        self.converged && !self.degenerate && self.f2.is_finite()
    }

    pub fn damping(&self) -> f64 {
        self.params().damping()
    }
}

struct StartResult {
    m: f64,
    omega: f64,
    f: f64,
    converged: bool,
}

fn search_mw(
    cost: &mut CostFunction<'_>,
    starts: &[(f64, f64)],
    cfg: &CalibrationConfig,
) -> Option<StartResult> {
    let bounds = [cfg.m_bounds, cfg.omega_bounds];
    let steps = [cfg.initial_step.0, cfg.initial_step.1];
    let mut best: Option<StartResult> = None;
    for &(m0, w0) in starts {
        let r = cfg
            .nelder_mead
            .minimize(|x| cost.f1(x[0], x[1]), &[m0, w0], &steps, &bounds);
        let better = match &best {
            None => true,
            Some(b) => r.fx < b.f || (r.fx == b.f && r.converged && !b.converged),
        };
        if better {
            best = Some(StartResult {
                m: r.x[0],
                omega: r.x[1],
                f: r.fx,
                converged: r.converged,
            });
        }
    }
    best
}

fn point_from_search(
    series: &PriceSeries,
    tc: f64,
    best: Option<StartResult>,
    cfg: &CalibrationConfig,
) -> ProfilePoint {
    let n = series.len();
    let (m, omega, converged, finite) = match &best {
        Some(b) => (b.m, b.omega, b.converged, b.f.is_finite()),
        None => (f64::NAN, f64::NAN, false, false),
    };
    let at_search_bound = [
        (m, cfg.m_bounds),
        (omega, cfg.omega_bounds),
    ]
    .iter()
    .any(|(v, (lo, hi))| {
        let tol = 1e-6 * (hi - lo);
        (*v - lo).abs() < tol || (hi - *v).abs() < tol
    });
    let solved = if finite {
        solve_linear(series, tc, m, omega, cfg.max_condition).ok()
    } else {
        None
    };
    match solved {
        Some(fit) => ProfilePoint {
            tc,
            f2: fit.sse,
            m_hat: m,
            omega_hat: omega,
            linear: fit.linear,
            s_hat: fit.sse / n as f64,
            n,
            converged,
            degenerate: false,
            condition_number: fit.condition_number,
            at_search_bound,
        },
        None => ProfilePoint {
            tc,
            f2: f64::INFINITY,
            m_hat: m,
            omega_hat: omega,
            linear: LinearParams::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            s_hat: f64::INFINITY,
            n,
            converged,
            degenerate: true,
            condition_number: f64::INFINITY,
            at_search_bound,
        },
    }
}

/// Minimizes `F1(tc, ·, ·)` from every start and keeps the best result.
///
/// `starts` defaults to the configured start set.
pub fn minimize_f1(
    series: &PriceSeries,
    tc: f64,
    starts: Option<&[(f64, f64)]>,
    cfg: &CalibrationConfig,
) -> Result<ProfilePoint, CalibrateError> {
    if series.len() < MIN_LINEAR_OBSERVATIONS {
        return Err(CalibrateError::TooFewObservations(series.len()));
    }
    let mut cost = CostFunction::new(series, cfg.max_condition);
    if !cost.set_tc(tc) {
        return Err(CalibrateError::Singular(tc));
    }
    let starts = starts.unwrap_or(&cfg.starts);
    let best = search_mw(&mut cost, starts, cfg);
    Ok(point_from_search(series, tc, best, cfg))
}

/// `F2` over a grid of `tc` values.
///
/// With `warm_start` the grid is walked in order and each point also starts
/// from its predecessor's optimum; otherwise points are computed in parallel
/// from the standard start set only.
pub fn profile_f2(
    series: &PriceSeries,
    tc_grid: &[f64],
    cfg: &CalibrationConfig,
) -> Result<Vec<ProfilePoint>, CalibrateError> {
    if tc_grid.is_empty() {
        return Err(CalibrateError::EmptyGrid);
    }
    if series.len() < MIN_LINEAR_OBSERVATIONS {
        return Err(CalibrateError::TooFewObservations(series.len()));
    }
    if cfg.warm_start {
        let mut cost = CostFunction::new(series, cfg.max_condition);
        let mut starts = cfg.starts.clone();
        let base = starts.len();
        let mut out = Vec::with_capacity(tc_grid.len());
        for &tc in tc_grid {
            if !cost.set_tc(tc) {
                return Err(CalibrateError::Singular(tc));
            }
            let best = search_mw(&mut cost, &starts, cfg);
            let point = point_from_search(series, tc, best, cfg);
            starts.truncate(base);
            if point.f2.is_finite() {
                starts.push((point.m_hat, point.omega_hat));
            }
            out.push(point);
        }
        Ok(out)
    } else {
        tc_grid
            .par_iter()
            .map(|&tc| minimize_f1(series, tc, None, cfg))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: LpplsParams,
    pub sse: f64,
    pub n: usize,
    pub converged: bool,
    /// Local searches run at the winning grid point.
    pub n_restarts_used: usize,
    pub condition_number: f64,
    /// The cost minimum sits on the first or last grid point.
    pub boundary: bool,
    /// Index of the best grid point.
    pub grid_index: usize,
    /// Strict stylized-feature flags of the point estimate.
    pub qualification: QualificationFlags,
}

impl FitResult {
    pub fn damping(&self) -> f64 {
        self.params.damping()
    }
}

/// Minimum of the `F2` profile polished jointly over `(tc, m, ω)`.
pub fn full_mle(
    series: &PriceSeries,
    tc_grid: &[f64],
    cfg: &CalibrationConfig,
) -> Result<FitResult, CalibrateError> {
    let profile = profile_f2(series, tc_grid, cfg)?;
    mle_from_profile(series, &profile, cfg)
}

/// Same as [`full_mle`] for an already computed profile.
pub fn mle_from_profile(
    series: &PriceSeries,
    profile: &[ProfilePoint],
    cfg: &CalibrationConfig,
) -> Result<FitResult, CalibrateError> {
    if profile.is_empty() {
        return Err(CalibrateError::EmptyGrid);
    }
    let (grid_index, best) = profile
        .iter()
        .enumerate()
        .filter(|(_, p)| p.f2.is_finite() && !p.degenerate)
        .min_by(|a, b| a.1.f2.total_cmp(&b.1.f2))
        .ok_or(CalibrateError::NoValidPoint)?;
    let boundary = profile.len() > 1 && (grid_index == 0 || grid_index == profile.len() - 1);

    let half = if profile.len() > 1 {
        let lo = grid_index.saturating_sub(1);
        let hi = (grid_index + 1).min(profile.len() - 1);
        (profile[hi].tc - profile[lo].tc) / (hi - lo) as f64
    } else {
        1.0
    };
    let tc_bounds = (best.tc - half, best.tc + half);

    let mut cost = CostFunction::new(series, cfg.max_condition);
    let polished = cfg.nelder_mead.minimize(
        |x| cost.f1_at(x[0], x[1], x[2]),
        &[best.tc, best.m_hat, best.omega_hat],
        &[half / 4.0, 0.05, 0.25],
        &[tc_bounds, cfg.m_bounds, cfg.omega_bounds],
    );
    let mut nl = if polished.fx <= best.f2 {
        NonlinearParams::new(polished.x[0], polished.x[1], polished.x[2])
    } else {
        NonlinearParams::new(best.tc, best.m_hat, best.omega_hat)
    };
    let mut fit = solve_linear(series, nl.tc, nl.m, nl.omega, cfg.max_condition)?;

    if cfg.refine {
        let start = LpplsParams::new(nl, fit.linear, fit.sse);
        let refined = gauss_newton(series, &start, [tc_bounds, cfg.m_bounds, cfg.omega_bounds]);
        if let Ok(f) = solve_linear(
            series,
            refined.nonlinear.tc,
            refined.nonlinear.m,
            refined.nonlinear.omega,
            cfg.max_condition,
        ) {
            if f.sse <= fit.sse {
                nl = refined.nonlinear;
                fit = f;
            }
        }
    }

    let n = series.len();
    let params = LpplsParams::new(nl, fit.linear, fit.sse / n as f64);
    let qualification = model::qualify(&params, None, FilterMode::Strict, &cfg.bounds)
        .expect("strict qualification needs no intervals");
    Ok(FitResult {
        params,
        sse: fit.sse,
        n,
        converged: best.converged && polished.converged,
        n_restarts_used: cfg.starts.len() + usize::from(cfg.warm_start && grid_index > 0),
        condition_number: fit.condition_number,
        boundary,
        grid_index,
        qualification,
    })
}

/// Derivative of LPPLS with respect to `tc`.
pub fn d_dtc(t: f64, params: &LpplsParams) -> Result<f64, model::ModelError> {
    let NonlinearParams { tc, m, omega } = params.nonlinear;
    let LinearParams { b, c1, c2, .. } = params.linear;
    let basis = model::basis(t, tc, m, omega)?;
    let power = b * basis.f + c1 * basis.g + c2 * basis.h;
    let osc = c2 * basis.g - c1 * basis.h;
    Ok((m * power + omega * osc) / (tc - t))
}

/// Damped Gauss–Newton on `(tc, m, ω, A, B, C1, C2)`; the nonlinear triple is
/// kept inside `box_`. Returns the best parameters found.
fn gauss_newton(series: &PriceSeries, start: &LpplsParams, box_: [(f64, f64); 3]) -> LpplsParams {
    let n = series.len();
    let t = series.times();
    let y = series.log_prices();
    let eval = |p: &LpplsParams| -> Option<f64> {
        let r = residuals(series, p).ok()?;
        Some(r.iter().map(|v| v * v).sum())
    };
    let mut current = *start;
    let Some(mut sse) = eval(&current) else {
        return current;
    };
    for _ in 0..100 {
        let mut jac = DMatrix::zeros(n, 7);
        let mut r = DVector::zeros(n);
        for i in 0..n {
            let Ok(g) = model::grad_psi(t[i], &current) else {
                return current;
            };
            let Ok(dtc) = d_dtc(t[i], &current) else {
                return current;
            };
            let Ok(v) = model::lppls(t[i], &current.nonlinear, &current.linear) else {
                return current;
            };
            jac[(i, 0)] = dtc;
            for k in 0..6 {
                jac[(i, k + 1)] = g[k];
            }
            r[i] = y[i] - v;
        }
        // column scaling, then an SVD so each damping level is a cheap re-solve
        let scale: Vec<f64> = (0..7)
            .map(|k| {
                let norm = jac.column(k).norm();
                if norm > 0.0 {
                    1.0 / norm
                } else {
                    1.0
                }
            })
            .collect();
        for k in 0..7 {
            jac.column_mut(k).scale_mut(scale[k]);
        }
        let svd = jac.svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
            return current;
        };
        let utr = u.transpose() * &r;
        let smax = svd.singular_values.max();
        let mut improved = false;
        for mu in [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0] {
            let lambda = mu * smax * smax;
            let coef = DVector::from_iterator(
                7,
                (0..7).map(|k| {
                    let sk = svd.singular_values[k];
                    if sk > 1e-14 * smax {
                        sk / (sk * sk + lambda) * utr[k]
                    } else {
                        0.0
                    }
                }),
            );
            let step = v_t.transpose() * coef;
            let delta: Vec<f64> = (0..7).map(|k| step[k] * scale[k]).collect();
            let trial = LpplsParams::new(
                NonlinearParams::new(
                    current.nonlinear.tc + delta[0],
                    current.nonlinear.m + delta[1],
                    current.nonlinear.omega + delta[2],
                ),
                LinearParams::new(
                    current.linear.a + delta[3],
                    current.linear.b + delta[4],
                    current.linear.c1 + delta[5],
                    current.linear.c2 + delta[6],
                ),
                current.s,
            );
            let nl = [trial.nonlinear.tc, trial.nonlinear.m, trial.nonlinear.omega];
            let inside = nl.iter().zip(&box_).all(|(v, (lo, hi))| v >= lo && v <= hi);
            match eval(&trial) {
                Some(s) if inside && s < sse => {
                    current = trial;
                    sse = s;
                    improved = true;
                    break;
                }
                _ => {}
            }
        }
        if !improved {
            break;
        }
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn series_from(times: &[f64], values: &[f64]) -> PriceSeries {
        let origin = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let dates = times
            .iter()
            .map(|t| origin + chrono::Duration::days(*t as i64))
            .collect();
        PriceSeries::with_origin(dates, values.to_vec(), origin).unwrap()
    }

    fn business_times(n: usize) -> Vec<f64> {
        (0..).filter(|d| d % 7 < 5).take(n).map(|d| d as f64).collect()
    }

    fn truth() -> LpplsParams {
        LpplsParams::new(
            NonlinearParams::new(320.0, 0.8, 9.0),
            LinearParams::new(8.0, -0.015, 0.0015, 0.0004),
            0.0,
        )
    }

    fn exact_series() -> PriceSeries {
        let p = truth();
        let t = business_times(200);
        let y: Vec<f64> = t
            .iter()
            .map(|&t| model::lppls(t, &p.nonlinear, &p.linear).unwrap())
            .collect();
        series_from(&t, &y)
    }

    #[test]
    fn exact_data_recovers_amplitudes() {
        let s = exact_series();
        let p = truth();
        let fit = solve_linear(&s, 320.0, 0.8, 9.0, 1e12).unwrap();
        assert!((fit.linear.a - p.linear.a).abs() < 1e-9);
        assert!((fit.linear.b - p.linear.b).abs() < 1e-9);
        assert!((fit.linear.c1 - p.linear.c1).abs() < 1e-9);
        assert!((fit.linear.c2 - p.linear.c2).abs() < 1e-9);
        assert!(fit.sse < 1e-18 * s.len() as f64);
    }

    #[test]
    fn constant_series() {
        let t = business_times(60);
        let s = series_from(&t, &vec![4.2; 60]);
        let fit = solve_linear(&s, 100.5, 0.5, 7.0, 1e12).unwrap();
        assert!((fit.linear.a - 4.2).abs() < 1e-10);
        assert!(fit.linear.b.abs() < 1e-10);
        assert!(fit.linear.c1.abs() < 1e-10 && fit.linear.c2.abs() < 1e-10);
        assert!(fit.sse < 1e-20);
    }

    #[test]
    fn residual_orthogonal_to_regressors() {
        let t = business_times(120);
        let y: Vec<f64> = t.iter().map(|x| (x * 0.37).sin() * 0.1 + x * 1e-3).collect();
        let s = series_from(&t, &y);
        let (tc, m, w) = (200.5, 0.6, 7.3);
        let fit = solve_linear(&s, tc, m, w, 1e12).unwrap();
        let nl = NonlinearParams::new(tc, m, w);
        let r: Vec<f64> = t
            .iter()
            .zip(&y)
            .map(|(&ti, &yi)| yi - model::lppls(ti, &nl, &fit.linear).unwrap())
            .collect();
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for col in 0..4 {
            let x: Vec<f64> = t
                .iter()
                .map(|&ti| {
                    let b = model::basis(ti, tc, m, w).unwrap();
                    [1.0, b.f, b.g, b.h][col]
                })
                .collect();
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = x.iter().zip(&r).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-8 * xnorm * rnorm, "column {col}: {dot}");
        }
        let direct: f64 = r.iter().map(|v| v * v).sum();
        assert!((direct - fit.sse).abs() <= 1e-12 * direct);
    }

    #[test]
    fn fast_cost_matches_qr_solve() {
        let t = business_times(150);
        let y: Vec<f64> = t.iter().map(|x| 3.0 + (x * 0.05).cos() * 0.2).collect();
        let s = series_from(&t, &y);
        let mut cost = CostFunction::new(&s, 1e12);
        for &(tc, m, w) in &[(250.5, 0.3, 5.0), (230.5, 1.1, 12.0), (100.5, 0.5, 8.0)] {
            let fast = cost.f1_at(tc, m, w);
            let exact = solve_linear(&s, tc, m, w, 1e12).unwrap().sse;
            assert!((fast - exact).abs() <= 1e-8 * exact, "{fast} vs {exact}");
        }
    }

    #[test]
    fn singular_tc_rejected() {
        let s = exact_series();
        assert_eq!(
            solve_linear(&s, 0.0, 0.5, 7.0, 1e12).unwrap_err(),
            CalibrateError::Singular(0.0)
        );
        assert!(matches!(
            minimize_f1(&s, 7.0, None, &CalibrationConfig::default()),
            Err(CalibrateError::Singular(_))
        ));
    }

    #[test]
    fn degenerate_design_flagged() {
        // two distinct times only: the four regressors are collinear
        let t = business_times(10);
        let y = vec![1.0; 10];
        let mut times = t.clone();
        times.truncate(10);
        let s = series_from(&times, &y);
        // ω tiny and m tiny make g and h nearly constant multiples of f
        let err = solve_linear(&s, 1e6 + 0.5, 1e-6, 1e-6, 1e12).unwrap_err();
        assert!(matches!(err, CalibrateError::Degenerate(_)));
    }

    #[test]
    fn tc_range_grid() {
        let r = TcRange::default();
        let g = r.grid(100.0);
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 50.5);
        assert_eq!(g[200], 250.5);
        let coarse = TcRange {
            min_offset: 0,
            max_offset: 9,
            step: 4,
        };
        assert_eq!(coarse.offsets(), vec![0, 4, 8]);
    }

    #[test]
    fn default_start_set() {
        let cfg = CalibrationConfig::default();
        assert_eq!(cfg.starts.len(), 15);
        assert!(cfg.starts.contains(&(0.5, 13.0)));
    }

    #[test]
    fn minimizer_dominates_known_start() {
        let s = exact_series();
        let cfg = CalibrationConfig::default();
        let p = minimize_f1(&s, 320.5, Some(&[(0.8, 9.0)]), &cfg).unwrap();
        let mut cost = CostFunction::new(&s, 1e12);
        assert!(p.f2 <= cost.f1_at(320.5, 0.8, 9.0));
    }

    #[test]
    fn tc_derivative_matches_finite_difference() {
        let p = truth();
        for &t in &[10.0, 150.0, 300.0, 330.0] {
            let h = 1e-5;
            let mut up = p;
            up.nonlinear.tc += h;
            let mut dn = p;
            dn.nonlinear.tc -= h;
            let fd = (model::lppls(t, &up.nonlinear, &up.linear).unwrap()
                - model::lppls(t, &dn.nonlinear, &dn.linear).unwrap())
                / (2.0 * h);
            let an = d_dtc(t, &p).unwrap();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-8), "{fd} vs {an}");
        }
    }
}
