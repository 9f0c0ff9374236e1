use chrono::NaiveDate;
use serde::Serialize;

use lppls::calibrate::{CalibrationConfig, TcRange};
use lppls::intervals::ParamGrid;
use lppls::multiscale::DtRange;
use lppls::synthetic::GeneratorSpec;

use crate::args::{Filter, Format, TcArgs};
use crate::error::CliError;

/// Version of every report and sidecar written by the CLI.
pub const SCHEMA_VERSION: u32 = 1;

/// Fully resolved settings of one run, embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub version: &'static str,
    pub format: Format,
    pub out_dir: Option<String>,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_gap_days: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_observations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_days: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tc: Option<TcRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<DtRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<Filter>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tc_offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_grid: Option<ParamGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_grid: Option<ParamGrid>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<&'static str>,
}

impl RunConfig {
    pub fn new(command: &'static str, format: Format, out_dir: Option<String>, threads: usize) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            format,
            out_dir,
            threads,
            input: None,
            t2: None,
            max_gap_days: None,
            min_observations: None,
            window_days: None,
            tc: None,
            dt: None,
            cutoffs: None,
            filter: None,
            tc_offset: None,
            m_grid: None,
            omega_grid: None,
            seed: None,
            calibration: None,
            generator: None,
            rng: None,
        }
    }
}

pub fn tc_range(a: &TcArgs) -> Result<TcRange, CliError> {
    if a.tc_step <= 0 {
        return Err(CliError::usage(format!("--tc-step must be positive, got {}", a.tc_step)));
    }
    if a.tc_min_offset > a.tc_max_offset {
        return Err(CliError::usage(format!(
            "--tc-min-offset {} exceeds --tc-max-offset {}",
            a.tc_min_offset, a.tc_max_offset
        )));
    }
    Ok(TcRange {
        min_offset: a.tc_min_offset,
        max_offset: a.tc_max_offset,
        step: a.tc_step,
    })
}

pub fn check_cutoffs(cutoffs: &[f64]) -> Result<(), CliError> {
    if cutoffs.is_empty() {
        return Err(CliError::usage("at least one --cutoff is required"));
    }
    match cutoffs.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
        Some(c) => Err(CliError::usage(format!("--cutoff must lie in (0, 1), got {c}"))),
        None => Ok(()),
    }
}

pub fn check_window_days(days: i64) -> Result<(), CliError> {
    if days <= 0 {
        return Err(CliError::usage(format!("--window-days must be positive, got {days}")));
    }
    Ok(())
}

pub fn check_min_observations(n: usize) -> Result<(), CliError> {
    if n < lppls::calibrate::MIN_LINEAR_OBSERVATIONS {
        return Err(CliError::usage(format!(
            "--min-observations must be at least {}, got {n}",
            lppls::calibrate::MIN_LINEAR_OBSERVATIONS
        )));
    }
    Ok(())
}

pub fn param_grid(name: &str, min: f64, max: f64, step: f64) -> Result<ParamGrid, CliError> {
    let finite = min.is_finite() && max.is_finite() && step.is_finite();
    if !finite || step <= 0.0 || min >= max || min <= 0.0 {
        return Err(CliError::usage(format!(
            "invalid {name} grid: min {min}, max {max}, step {step}"
        )));
    }
    Ok(ParamGrid { min, max, step })
}
