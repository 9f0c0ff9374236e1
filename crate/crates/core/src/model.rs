//! The reformulated LPPLS function, its basis, analytic derivatives with
//! respect to the nuisance vector `ψ = (m, ω, A, B, C1, C2)`, the damping
//! quantity and the stylized-feature constraint checks.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum admissible distance `|tc - t|` in days.
pub const SINGULARITY_GUARD: f64 = 1e-9;

/// Dimension of the nuisance vector `ψ`.
pub const PSI_DIM: usize = 6;

/// Positions of the components of `ψ` in gradients and Hessians.
pub mod idx {
    pub const M: usize = 0;
    pub const OMEGA: usize = 1;
    pub const A: usize = 2;
    pub const B: usize = 3;
    pub const C1: usize = 4;
    pub const C2: usize = 5;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("LPPLS is singular at t = tc (|tc - t| = {distance:e} < {SINGULARITY_GUARD:e})")]
    Singular { distance: f64 },
    #[error("confidence-aware qualification requires nuisance intervals")]
    MissingIntervals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl LinearParams {
    pub fn new(a: f64, b: f64, c1: f64, c2: f64) -> Self {
        Self { a, b, c1, c2 }
    }

    /// Builds the linear parameters from the amplitude/phase form.
    pub fn from_amplitude_phase(a: f64, b: f64, c: f64, phi: f64) -> Self {
        Self::new(a, b, c * phi.cos(), c * phi.sin())
    }

    /// Log-periodic amplitude `|C| = sqrt(C1² + C2²)`.
    pub fn c(&self) -> f64 {
        self.c1.hypot(self.c2)
    }

    pub fn phi(&self) -> f64 {
        self.c2.atan2(self.c1)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c1.is_finite() && self.c2.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    /// Critical time, in numeric days on the series axis.
    pub tc: f64,
    pub m: f64,
    pub omega: f64,
}

impl NonlinearParams {
    pub fn new(tc: f64, m: f64, omega: f64) -> Self {
        Self { tc, m, omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplsParams {
    pub nonlinear: NonlinearParams,
    pub linear: LinearParams,
    /// Residual variance.
    pub s: f64,
}

impl LpplsParams {
    pub fn new(nonlinear: NonlinearParams, linear: LinearParams, s: f64) -> Self {
        Self {
            nonlinear,
            linear,
            s,
        }
    }

    pub fn damping(&self) -> f64 {
        damping(
            self.nonlinear.m,
            self.linear.b,
            self.nonlinear.omega,
            self.linear.c1,
            self.linear.c2,
        )
    }

    /// `ψ` as a vector in the `(m, ω, A, B, C1, C2)` order.
    pub fn psi(&self) -> Vector6<f64> {
        Vector6::new(
            self.nonlinear.m,
            self.nonlinear.omega,
            self.linear.a,
            self.linear.b,
            self.linear.c1,
            self.linear.c2,
        )
    }

    /// Inverse of [`LpplsParams::psi`]; `tc` and `s` are kept.
    pub fn with_psi(&self, psi: &Vector6<f64>) -> Self {
        Self {
            nonlinear: NonlinearParams::new(self.nonlinear.tc, psi[0], psi[1]),
            linear: LinearParams::new(psi[2], psi[3], psi[4], psi[5]),
            s: self.s,
        }
    }
}

/// Basis functions `f = |tc-t|^m`, `g = f cos(ω ln|tc-t|)`, `h = f sin(ω ln|tc-t|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Basis {
    pub f: f64,
    pub g: f64,
    pub h: f64,
}

#[inline]
fn log_distance(t: f64, tc: f64) -> Result<f64, ModelError> {
    let distance = (tc - t).abs();
    if distance < SINGULARITY_GUARD {
        return Err(ModelError::Singular { distance });
    }
    Ok(distance.ln())
}

pub fn basis(t: f64, tc: f64, m: f64, omega: f64) -> Result<Basis, ModelError> {
    let l = log_distance(t, tc)?;
    let f = (m * l).exp();
    let (sin, cos) = (omega * l).sin_cos();
    Ok(Basis {
        f,
        g: f * cos,
        h: f * sin,
    })
}

/// Evaluates the LPPLS log-price with the symmetric `|tc - t|` extension.
pub fn lppls(t: f64, nl: &NonlinearParams, lin: &LinearParams) -> Result<f64, ModelError> {
    let Basis { f, g, h } = basis(t, nl.tc, nl.m, nl.omega)?;
    Ok(lin.a + lin.b * f + lin.c1 * g + lin.c2 * h)
}

/// The original amplitude/phase form `A + B|tc-t|^m + C|tc-t|^m cos(ω ln|tc-t| - φ)`.
pub fn lppls_amplitude_phase(
    t: f64,
    nl: &NonlinearParams,
    a: f64,
    b: f64,
    c: f64,
    phi: f64,
) -> Result<f64, ModelError> {
    let l = log_distance(t, nl.tc)?;
    let f = (nl.m * l).exp();
    Ok(a + b * f + c * f * (nl.omega * l - phi).cos())
}

/// Gradient of LPPLS with respect to `ψ = (m, ω, A, B, C1, C2)`.
pub fn grad_psi(t: f64, params: &LpplsParams) -> Result<Vector6<f64>, ModelError> {
    let NonlinearParams { tc, m, omega } = params.nonlinear;
    let LinearParams { b, c1, c2, .. } = params.linear;
    let l = log_distance(t, tc)?;
    let f = (m * l).exp();
    let (sin, cos) = (omega * l).sin_cos();
    let fl = f * l;
    Ok(Vector6::new(
        fl * (b + c1 * cos + c2 * sin),
        fl * (c2 * cos - c1 * sin),
        1.0,
        f,
        f * cos,
        f * sin,
    ))
}

/// Symmetric Hessian of LPPLS with respect to `ψ`.
///
/// Only the `(m, ω)` rows carry nonzero entries; the model is linear in
/// `(A, B, C1, C2)` and `A` enters additively.
pub fn hess_psi(t: f64, params: &LpplsParams) -> Result<Matrix6<f64>, ModelError> {
    let NonlinearParams { tc, m, omega } = params.nonlinear;
    let LinearParams { b, c1, c2, .. } = params.linear;
    let l = log_distance(t, tc)?;
    let f = (m * l).exp();
    let (sin, cos) = (omega * l).sin_cos();
    let fl = f * l;
    let fl2 = fl * l;

    let mut hess = Matrix6::zeros();
    let mut set = |i: usize, j: usize, v: f64| {
        hess[(i, j)] = v;
        hess[(j, i)] = v;
    };
    set(idx::M, idx::M, fl2 * (b + c1 * cos + c2 * sin));
    set(idx::M, idx::OMEGA, fl2 * (c2 * cos - c1 * sin));
    set(idx::M, idx::B, fl);
    set(idx::M, idx::C1, fl * cos);
    set(idx::M, idx::C2, fl * sin);
    set(idx::OMEGA, idx::OMEGA, -fl2 * (c1 * cos + c2 * sin));
    set(idx::OMEGA, idx::C1, -fl * sin);
    set(idx::OMEGA, idx::C2, fl * cos);
    Ok(hess)
}

/// Damping `D = m|B| / (ω|C|)`. A vanishing log-periodic amplitude yields
/// `+inf`, which always satisfies the damping constraint.
pub fn damping(m: f64, b: f64, omega: f64, c1: f64, c2: f64) -> f64 {
    let c = c1.hypot(c2);
    if c == 0.0 {
        return f64::INFINITY;
    }
    m * b.abs() / (omega * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Strict,
    ConfidenceAware,
}

/// Stylized-feature bounds. Defaults: `0.1 ≤ m ≤ 0.9`, `6 ≤ ω ≤ 13`,
/// `B < 0`, `D ≥ 0.8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBounds {
    pub m: (f64, f64),
    pub omega: (f64, f64),
    pub damping_min: f64,
}

impl Default for ConstraintBounds {
    fn default() -> Self {
        Self {
            m: (0.1, 0.9),
            omega: (6.0, 13.0),
            damping_min: 0.8,
        }
    }
}

/// Symmetric approximate interval `center ± half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricInterval {
    pub center: f64,
    pub half_width: f64,
}

impl SymmetricInterval {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

/// Intervals consulted by confidence-aware qualification. A missing damping
/// interval means the damping is unbounded (`|C| = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualificationIntervals {
    pub m: SymmetricInterval,
    pub omega: SymmetricInterval,
    pub damping: Option<SymmetricInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationFlags {
    pub m_ok: bool,
    pub omega_ok: bool,
    pub b_ok: bool,
    pub d_ok: bool,
    pub mode: FilterMode,
}

impl QualificationFlags {
    pub fn qualified(&self) -> bool {
        self.m_ok && self.omega_ok && self.b_ok && self.d_ok
    }
}

fn overlaps(lo: f64, hi: f64, range: (f64, f64)) -> bool {
    lo <= range.1 && hi >= range.0
}

/// Applies the stylized-feature constraints.
///
/// Strict mode tests point estimates. Confidence-aware mode accepts `m`, `ω`
/// and `D` when their interval overlaps the allowed range; `B < 0` is always
/// tested on the point estimate since no interval is attached to it.
pub fn qualify(
    params: &LpplsParams,
    intervals: Option<&QualificationIntervals>,
    mode: FilterMode,
    bounds: &ConstraintBounds,
) -> Result<QualificationFlags, ModelError> {
    let m = params.nonlinear.m;
    let omega = params.nonlinear.omega;
    let d = params.damping();
    let b_ok = params.linear.b < 0.0;
    match mode {
        FilterMode::Strict => Ok(QualificationFlags {
            m_ok: (bounds.m.0..=bounds.m.1).contains(&m),
            omega_ok: (bounds.omega.0..=bounds.omega.1).contains(&omega),
            b_ok,
            d_ok: d >= bounds.damping_min,
            mode,
        }),
        FilterMode::ConfidenceAware => {
            let iv = intervals.ok_or(ModelError::MissingIntervals)?;
            let strict = qualify(params, None, FilterMode::Strict, bounds)?;
            let d_ok = match iv.damping {
                Some(di) => strict.d_ok || di.hi() >= bounds.damping_min,
                None => true,
            };
            Ok(QualificationFlags {
                m_ok: strict.m_ok || overlaps(iv.m.lo(), iv.m.hi(), bounds.m),
                omega_ok: strict.omega_ok || overlaps(iv.omega.lo(), iv.omega.hi(), bounds.omega),
                b_ok,
                d_ok,
                mode,
            })
        }
    }
}
