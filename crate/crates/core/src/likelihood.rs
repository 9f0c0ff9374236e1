//! Gaussian likelihood of the LPPLS fit, the profile likelihood of `tc` and
//! its modified (Severini-adjusted) counterpart.
//!
//! With `η = (ψ, s)` and `ψ = (m, ω, A, B, C1, C2)`, the modified profile
//! log-likelihood at each `tc` is
//!
//! ```text
//! ½ ln|XᵀX − H| − ln|X̂ᵀX| − ((n − p − 2)/2) ln ŝ
//! ```
//!
//! where `X` holds the LPPLS gradients at the subordinated optimum, `X̂`
//! those at the full MLE and `H` the residual-weighted Hessian sum.

use std::io::Write;

use nalgebra::{DMatrix, Matrix6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{FitResult, ProfilePoint};
use crate::linalg;
use crate::model::{self, LpplsParams, ModelError, PSI_DIM};
use crate::series::PriceSeries;

/// Number of free parameters including `tc` and the variance.
pub const P_LAMBDA: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LikelihoodError {
    #[error("need more than {P_LAMBDA} observations, got {0}")]
    TooFewObservations(usize),
    #[error("profile is empty")]
    Empty,
    #[error("profile points come from different windows (n = {0} and {1})")]
    MixedWindows(usize, usize),
    #[error("every grid point is flagged")]
    AllFlagged,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn sigma2_mle(sse: f64, n: usize) -> f64 {
    sse / n as f64
}

/// Bias-corrected variance `SSE / (n − 7)`.
pub fn sigma2_unbiased(sse: f64, n: usize) -> Result<f64, LikelihoodError> {
    if n <= P_LAMBDA {
        return Err(LikelihoodError::TooFewObservations(n));
    }
    Ok(sse / (n - P_LAMBDA) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Tc,
    M,
    Omega,
    Damping,
}

impl Parameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            Parameter::Tc => "tc",
            Parameter::M => "m",
            Parameter::Omega => "omega",
            Parameter::Damping => "damping",
        }
    }
}

/// Per-point status on a likelihood curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    Ok,
    /// The optimizer hit its iteration cap.
    NotConverged,
    /// Degenerate linear design or no finite cost.
    Degenerate,
    /// Zero residuals; the profile likelihood is infinite here.
    PerfectFit,
    /// `XᵀX − H` is not positive definite.
    NotPositiveDefinite,
    /// The score covariance is singular.
    SingularCovariance,
}

impl PointFlag {
    /// Whether the point carries a profile likelihood value.
    pub fn lp_valid(self) -> bool {
        matches!(
            self,
            PointFlag::Ok
                | PointFlag::PerfectFit
                | PointFlag::NotPositiveDefinite
                | PointFlag::SingularCovariance
        )
    }

    /// Whether the point carries a modified profile likelihood value.
    pub fn lm_valid(self) -> bool {
        self == PointFlag::Ok
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PointFlag::Ok => "ok",
            PointFlag::NotConverged => "not_converged",
            PointFlag::Degenerate => "degenerate",
            PointFlag::PerfectFit => "perfect_fit",
            PointFlag::NotPositiveDefinite => "not_positive_definite",
            PointFlag::SingularCovariance => "singular_covariance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodCurve {
    pub parameter: Parameter,
    pub n: usize,
    pub grid: Vec<f64>,
    pub f2: Vec<f64>,
    /// `−(n/2) ln F2`; `None` for flagged points.
    pub log_lp: Vec<Option<f64>>,
    pub log_lm: Vec<Option<f64>>,
    pub rel_lp: Vec<Option<f64>>,
    pub rel_lm: Vec<Option<f64>>,
    pub flags: Vec<PointFlag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Lp,
    Lm,
}

impl LikelihoodCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn relative(&self, which: Which) -> &[Option<f64>] {
        match which {
            Which::Lp => &self.rel_lp,
            Which::Lm => &self.rel_lm,
        }
    }

    /// Index of the largest relative likelihood.
    pub fn argmax(&self, which: Which) -> Option<usize> {
        self.relative(which)
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Writes `offset, f2, log_lp, log_lm, rel_lp, rel_lm, flag` rows, with
    /// the grid shifted by `origin`. The first column is `tc_offset_days` for
    /// `tc` curves and the parameter name otherwise.
    pub fn write_csv<W: Write>(&self, writer: W, origin: f64) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let first = match self.parameter {
            Parameter::Tc => "tc_offset_days",
            other => other.as_str(),
        };
        w.write_record([first, "f2", "log_lp", "log_lm", "rel_lp", "rel_lm", "flag"])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for i in 0..self.len() {
            w.write_record([
                format!("{}", self.grid[i] - origin),
                format!("{:e}", self.f2[i]),
                opt(self.log_lp[i]),
                opt(self.log_lm[i]),
                opt(self.rel_lp[i]),
                opt(self.rel_lm[i]),
                self.flags[i].as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Normalizes log-likelihoods to relative likelihoods with maximum 1.
///
/// Infinite maxima (perfect fits) get 1 and every finite value 0.
pub fn normalize(log_l: &[Option<f64>]) -> Vec<Option<f64>> {
    let max = log_l
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    log_l
        .iter()
        .map(|v| {
            v.map(|x| {
                if max == f64::INFINITY {
                    if x == f64::INFINITY {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (x - max).exp()
                }
            })
        })
        .collect()
}

fn base_flag(p: &ProfilePoint) -> PointFlag {
    if p.degenerate || !p.f2.is_finite() {
        PointFlag::Degenerate
    } else if !p.converged {
        PointFlag::NotConverged
    } else if p.f2 == 0.0 {
        PointFlag::PerfectFit
    } else {
        PointFlag::Ok
    }
}

fn common_n(points: &[ProfilePoint]) -> Result<usize, LikelihoodError> {
    let first = points.first().ok_or(LikelihoodError::Empty)?.n;
    if let Some(p) = points.iter().find(|p| p.n != first) {
        return Err(LikelihoodError::MixedWindows(first, p.n));
    }
    Ok(first)
}

/// Profile likelihood `−(n/2) ln F2(tc)` and its relative version.
pub fn profile_likelihood(points: &[ProfilePoint]) -> Result<LikelihoodCurve, LikelihoodError> {
    let n = common_n(points)?;
    let flags: Vec<PointFlag> = points.iter().map(base_flag).collect();
    let log_lp: Vec<Option<f64>> = points
        .iter()
        .zip(&flags)
        .map(|(p, f)| f.lp_valid().then(|| -(n as f64 / 2.0) * p.f2.ln()))
        .collect();
    if log_lp.iter().all(Option::is_none) {
        return Err(LikelihoodError::AllFlagged);
    }
    let rel_lp = normalize(&log_lp);
    Ok(LikelihoodCurve {
        parameter: Parameter::Tc,
        n,
        grid: points.iter().map(|p| p.tc).collect(),
        f2: points.iter().map(|p| p.f2).collect(),
        log_lp,
        log_lm: vec![None; points.len()],
        rel_lp,
        rel_lm: vec![None; points.len()],
        flags,
    })
}

/// Gradient cross-products and residual-weighted Hessian sum at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherBlocks {
    /// `Σ ∇ψ LPPLS_i ∇ψ LPPLS_iᵀ`.
    pub xtx: Matrix6<f64>,
    /// `Σ r_i ∇²ψ LPPLS_i` with `r_i = y_i − LPPLS_i`.
    pub h: Matrix6<f64>,
    /// Variance MLE `SSE / n` at this point.
    pub s_hat: f64,
    pub n: usize,
    /// `ln|I(η)|` of the full 7×7 observed information, when it is positive definite.
    pub log_det_i: Option<f64>,
    pub params: LpplsParams,
}

impl FisherBlocks {
    /// `XᵀX − H`.
    pub fn curvature(&self) -> Matrix6<f64> {
        self.xtx - self.h
    }

    /// `ψ` block of the observed information, `(XᵀX − H) / ŝ`.
    pub fn information_psi(&self) -> Matrix6<f64> {
        self.curvature() / self.s_hat
    }

    /// Observed information for `η = (ψ, s)`.
    pub fn information(&self) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(PSI_DIM + 1, PSI_DIM + 1);
        full.view_mut((0, 0), (PSI_DIM, PSI_DIM))
            .copy_from(&self.information_psi());
        full[(PSI_DIM, PSI_DIM)] = self.n as f64 / (2.0 * self.s_hat * self.s_hat);
        full
    }

    /// Inverse of [`FisherBlocks::information`].
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        linalg::spd_inverse(&self.information())
    }
}

fn to_dyn(m: &Matrix6<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(PSI_DIM, PSI_DIM, m.iter().copied())
}

/// Observed-information ingredients at `params` (the subordinated optimum
/// at `params.nonlinear.tc`). The variance is re-estimated from the residuals.
pub fn fisher_blocks(series: &PriceSeries, params: &LpplsParams) -> Result<FisherBlocks, LikelihoodError> {
    let n = series.len();
    let mut xtx = Matrix6::zeros();
    let mut h = Matrix6::zeros();
    let mut sse = 0.0;
    for (&t, &y) in series.times().iter().zip(series.log_prices()) {
        let g = model::grad_psi(t, params)?;
        let r = y - model::lppls(t, &params.nonlinear, &params.linear)?;
        xtx += g * g.transpose();
        h += model::hess_psi(t, params)? * r;
        sse += r * r;
    }
    let s_hat = sigma2_mle(sse, n);
    let log_det_i = linalg::spd_logdet(&to_dyn(&(xtx - h))).map(|ld| {
        ld - PSI_DIM as f64 * s_hat.ln() + (n as f64 / (2.0 * s_hat * s_hat)).ln()
    });
    Ok(FisherBlocks {
        xtx,
        h,
        s_hat,
        n,
        log_det_i,
        params: *params,
    })
}

/// `Σ_i ∇ψ LPPLS_i(at_tc) ∇ψ LPPLS_i(at_mle)ᵀ`, the `ψ` block of the score
/// covariance up to the `1/ŝ` factor.
pub fn severini_sigma(
    series: &PriceSeries,
    at_tc: &LpplsParams,
    at_mle: &LpplsParams,
) -> Result<Matrix6<f64>, LikelihoodError> {
    let mut sigma = Matrix6::zeros();
    for &t in series.times() {
        let a = model::grad_psi(t, at_tc)?;
        let b = model::grad_psi(t, at_mle)?;
        sigma += a * b.transpose();
    }
    Ok(sigma)
}

/// Full 7×7 score covariance: `ψ` block `severini_sigma / ŝ`, zero cross
/// terms and `n / (2ŝ²)` for the variance.
pub fn severini_sigma_full(
    series: &PriceSeries,
    at_tc: &LpplsParams,
    at_mle: &LpplsParams,
    s_hat: f64,
) -> Result<DMatrix<f64>, LikelihoodError> {
    let raw = severini_sigma(series, at_tc, at_mle)?;
    let mut full = DMatrix::zeros(PSI_DIM + 1, PSI_DIM + 1);
    full.view_mut((0, 0), (PSI_DIM, PSI_DIM))
        .copy_from(&(raw / s_hat));
    full[(PSI_DIM, PSI_DIM)] = series.len() as f64 / (2.0 * s_hat * s_hat);
    Ok(full)
}

/// `½ ln|curvature| − ln|Σ| − ((n − p − 2)/2) ln ŝ`, or the flag explaining
/// why it is unavailable. `p` is the dimension of the matrices.
pub fn modified_log_likelihood(
    curvature: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    s_hat: f64,
    n: usize,
) -> Result<f64, PointFlag> {
    let p = curvature.nrows() as f64;
    let half_logdet = 0.5 * linalg::spd_logdet(curvature).ok_or(PointFlag::NotPositiveDefinite)?;
    let log_sigma = linalg::log_abs_det(sigma).ok_or(PointFlag::SingularCovariance)?;
    if !(s_hat > 0.0) {
        return Err(PointFlag::PerfectFit);
    }
    Ok(half_logdet - log_sigma - (n as f64 - p - 2.0) / 2.0 * s_hat.ln())
}

/// Adds the modified profile likelihood to the profile of `tc`.
///
/// `mle` must come from the same window as `profile`.
pub fn modified_profile_likelihood(
    series: &PriceSeries,
    profile: &[ProfilePoint],
    mle: &FitResult,
) -> Result<LikelihoodCurve, LikelihoodError> {
    let mut curve = profile_likelihood(profile)?;
    let n = curve.n;
    if n != series.len() || mle.n != n {
        return Err(LikelihoodError::MixedWindows(n, series.len()));
    }
    let results: Vec<(Option<f64>, PointFlag)> = profile
        .par_iter()
        .zip(curve.flags.par_iter())
        .map(|(p, &flag)| {
            if flag != PointFlag::Ok {
                return (None, flag);
            }
            let at_tc = p.params();
            let blocks = match fisher_blocks(series, &at_tc) {
                Ok(b) => b,
                Err(_) => return (None, PointFlag::Degenerate),
            };
            let sigma = match severini_sigma(series, &at_tc, &mle.params) {
                Ok(s) => s,
                Err(_) => return (None, PointFlag::SingularCovariance),
            };
            match modified_log_likelihood(
                &to_dyn(&blocks.curvature()),
                &to_dyn(&sigma),
                p.s_hat,
                n,
            ) {
                Ok(v) => (Some(v), PointFlag::Ok),
                Err(f) => (None, f),
            }
        })
        .collect();
    for (i, (v, f)) in results.into_iter().enumerate() {
        curve.log_lm[i] = v;
        curve.flags[i] = f;
    }
    if curve.log_lm.iter().all(Option::is_none) {
        return Err(LikelihoodError::AllFlagged);
    }
    curve.rel_lm = normalize(&curve.log_lm);
    Ok(curve)
}
