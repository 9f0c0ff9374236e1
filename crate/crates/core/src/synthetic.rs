//! LPPLS log-price series with additive Gaussian noise.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, LinearParams, NonlinearParams};
use crate::series::{PriceSeries, SeriesError};

/// Name of the variate stream recorded in generator metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng/rand_distr-0.5 StandardNormal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calendar {
    /// Monday to Friday.
    BusinessDays,
    /// Every calendar day.
    Daily,
}

impl Calendar {
    fn includes(&self, d: NaiveDate) -> bool {
        match self {
            Calendar::Daily => true,
            Calendar::BusinessDays => !matches!(d.weekday(), Weekday::Sat | Weekday::Sun),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub tc0: NaiveDate,
    pub m0: f64,
    pub omega0: f64,
    pub phi0: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub sigma0: f64,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub calendar: Calendar,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("sigma0 must be finite and non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("start {start} must precede end {end}")]
    EmptySpan { start: NaiveDate, end: NaiveDate },
    #[error("m0 and omega0 must be positive (m0 = {m0}, omega0 = {omega0})")]
    NonPositiveExponent { m0: f64, omega0: f64 },
    #[error("parameters must be finite")]
    NonFinite,
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Defaults mirroring the reference experiment: `tc0 = 1975-02-09`,
/// `m0 = 0.8`, `ω0 = 9`, `φ0 = 0`, `A0 = 8`, `B0 = -0.015`, `C0 = 0.0015`,
/// `σ0 = 0.03`, business-day sampling from 800 days before `tc0` up to the
/// day before it.
pub fn reference_spec() -> GeneratorSpec {
    let tc0 = NaiveDate::from_ymd_opt(1975, 2, 9).expect("valid date");
    GeneratorSpec {
        tc0,
        m0: 0.8,
        omega0: 9.0,
        phi0: 0.0,
        a0: 8.0,
        b0: -0.015,
        c0: 0.0015,
        sigma0: 0.03,
        start: tc0 - Duration::days(800),
        end: tc0 - Duration::days(1),
        calendar: Calendar::BusinessDays,
        seed: 0,
    }
}

impl GeneratorSpec {
    pub fn linear(&self) -> LinearParams {
        LinearParams::from_amplitude_phase(self.a0, self.b0, self.c0, self.phi0)
    }

    /// Nonlinear truth on the axis of a series with the given origin.
    pub fn nonlinear(&self, origin: NaiveDate) -> NonlinearParams {
        NonlinearParams::new((self.tc0 - origin).num_days() as f64, self.m0, self.omega0)
    }

    pub fn damping(&self) -> f64 {
        let l = self.linear();
        model::damping(self.m0, l.b, self.omega0, l.c1, l.c2)
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(self.sigma0 >= 0.0) || !self.sigma0.is_finite() {
            return Err(GeneratorError::NegativeSigma(self.sigma0));
        }
        if self.start >= self.end {
            return Err(GeneratorError::EmptySpan {
                start: self.start,
                end: self.end,
            });
        }
        if !(self.m0 > 0.0 && self.omega0 > 0.0) {
            return Err(GeneratorError::NonPositiveExponent {
                m0: self.m0,
                omega0: self.omega0,
            });
        }
        let all = [self.phi0, self.a0, self.b0, self.c0];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(GeneratorError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub series: PriceSeries,
    /// Sample dates dropped because they coincide with `tc0`.
    pub skipped: Vec<NaiveDate>,
}

/// Samples `LPPLS(t) + σ0 ε(t)` on the spec's calendar; the series origin
/// is the first sampled date.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated, GeneratorError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let origin = spec.start;
    let nl = spec.nonlinear(origin);
    let lin = spec.linear();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut skipped = Vec::new();
    for d in spec.start.iter_days().take_while(|d| *d <= spec.end) {
        if !spec.calendar.includes(d) {
            continue;
        }
        if d == spec.tc0 {
            skipped.push(d);
            continue;
        }
        let t = (d - origin).num_days() as f64;
        let clean = model::lppls(t, &nl, &lin).expect("date differs from tc0");
        let eps: f64 = StandardNormal.sample(&mut rng);
        dates.push(d);
        values.push(clean + spec.sigma0 * eps);
    }
    let series = PriceSeries::with_origin(dates, values, origin)?;
    Ok(Generated { series, skipped })
}
