//! Relative modified profile likelihood over window sizes and `tc`.
//!
//! Each row is one calibration window `[t2 − Δt, t2]` normalized on its own,
//! since likelihoods of windows with different `n` are not comparable.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{self, CalibrationConfig, ProfilePoint, TcRange};
use crate::intervals::{self, LikelihoodInterval};
use crate::likelihood::{self, LikelihoodCurve, Parameter, PointFlag, Which};
use crate::model::{
    self, ConstraintBounds, FilterMode, LinearParams, LpplsParams, NonlinearParams,
    QualificationIntervals,
};
use crate::series::{PriceSeries, Window, DEFAULT_MIN_OBSERVATIONS};

pub const SURFACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiscaleError {
    #[error("window-size range is empty or invalid: {0:?}")]
    InvalidDtRange(DtRange),
    #[error("cell ({row}, {col}) has a likelihood value but no interval data")]
    MissingIntervals { row: usize, col: usize },
    #[error("cutoff must lie in (0, 1), got {0}")]
    InvalidCutoff(f64),
}

/// Window sizes `min, min + step, …, ≤ max` in calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtRange {
    pub min: i64,
    pub max: i64,
    pub step: i64,
}

impl Default for DtRange {
    fn default() -> Self {
        Self {
            min: 60,
            max: 700,
            step: 20,
        }
    }
}

impl DtRange {
    pub fn values(&self) -> Result<Vec<i64>, MultiscaleError> {
        if self.step <= 0 || self.min <= 0 || self.min > self.max {
            return Err(MultiscaleError::InvalidDtRange(*self));
        }
        Ok((0..)
            .map(|k| self.min + k * self.step)
            .take_while(|d| *d <= self.max)
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanConfig {
    pub dt: DtRange,
    pub tc: TcRange,
    /// Cutoff of the nuisance intervals used by confidence-aware filtering.
    pub cutoff: f64,
    pub min_observations: usize,
    pub calibration: CalibrationConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            dt: DtRange::default(),
            tc: TcRange::default(),
            cutoff: 0.05,
            min_observations: DEFAULT_MIN_OBSERVATIONS,
            calibration: CalibrationConfig::default(),
        }
    }
}

/// Subordinated estimates at one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub m: f64,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    /// `None` when `|C| = 0` (unbounded damping).
    pub damping: Option<f64>,
    /// Curvature-based intervals; absent when the information is singular.
    pub intervals: Option<QualificationIntervals>,
}

impl CellEstimate {
    fn params(&self) -> LpplsParams {
        LpplsParams::new(
            NonlinearParams::new(0.0, self.m, self.omega),
            LinearParams::new(self.a, self.b, self.c1, self.c2),
            0.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowStatus {
    Ok { n: usize, mle_tc_offset: f64 },
    Missing { reason: String },
}

impl RowStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RowStatus::Ok { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleSurface {
    pub schema_version: u32,
    pub t2: NaiveDate,
    pub dt_values: Vec<i64>,
    /// `tc − t2` in days for each column.
    pub tc_offsets: Vec<f64>,
    /// Row-major `[dt][tc]`; `None` for missing or flagged cells.
    pub rel_lm: Vec<Vec<Option<f64>>>,
    pub rel_lp: Vec<Vec<Option<f64>>>,
    pub flags: Vec<Vec<Option<PointFlag>>>,
    pub estimates: Vec<Vec<Option<CellEstimate>>>,
    pub qualified_strict: Vec<Vec<bool>>,
    pub qualified_confidence: Vec<Vec<bool>>,
    /// The row's maximum sits on the first or last `tc` column; its
    /// intervals are unreliable.
    pub boundary_rows: Vec<bool>,
    pub row_status: Vec<RowStatus>,
    pub cutoff: f64,
    pub bounds: ConstraintBounds,
}

struct Row {
    rel_lm: Vec<Option<f64>>,
    rel_lp: Vec<Option<f64>>,
    flags: Vec<Option<PointFlag>>,
    estimates: Vec<Option<CellEstimate>>,
    boundary: bool,
    status: RowStatus,
}

fn missing_row(cols: usize, reason: String) -> Row {
    Row {
        rel_lm: vec![None; cols],
        rel_lp: vec![None; cols],
        flags: vec![None; cols],
        estimates: vec![None; cols],
        boundary: false,
        status: RowStatus::Missing { reason },
    }
}

fn estimate(series: &PriceSeries, p: &ProfilePoint, cutoff: f64) -> CellEstimate {
    let params = p.params();
    let intervals = likelihood::fisher_blocks(series, &params)
        .ok()
        .and_then(|fb| intervals::qualification_intervals(&fb, cutoff).ok());
    let d = params.damping();
    CellEstimate {
        m: p.m_hat,
        omega: p.omega_hat,
        a: p.linear.a,
        b: p.linear.b,
        c1: p.linear.c1,
        c2: p.linear.c2,
        damping: d.is_finite().then_some(d),
        intervals,
    }
}

fn scan_row(series: &PriceSeries, t2: NaiveDate, dt: i64, cfg: &ScanConfig) -> Row {
    let grid = cfg.tc.grid(series.time_of(t2));
    let cols = grid.len();
    let window = match Window::ending_at(t2, dt)
        .and_then(|w| series.calibration_window(&w, cfg.min_observations))
    {
        Ok(w) => w,
        Err(e) => return missing_row(cols, e.to_string()),
    };
    let curve = calibrate::profile_f2(&window, &grid, &cfg.calibration)
        .map_err(|e| e.to_string())
        .and_then(|profile| {
            let mle = calibrate::mle_from_profile(&window, &profile, &cfg.calibration)
                .map_err(|e| e.to_string())?;
            let curve = likelihood::modified_profile_likelihood(&window, &profile, &mle)
                .map_err(|e| e.to_string())?;
            Ok((profile, mle, curve))
        });
    let (profile, mle, curve) = match curve {
        Ok(v) => v,
        Err(reason) => return missing_row(cols, reason),
    };
    let argmax = curve.argmax(Which::Lm);
    let boundary = matches!(argmax, Some(i) if i == 0 || i + 1 == cols);
    let estimates = profile
        .iter()
        .zip(&curve.flags)
        .map(|(p, f)| f.lp_valid().then(|| estimate(&window, p, cfg.cutoff)))
        .collect();
    Row {
        rel_lm: curve.rel_lm,
        rel_lp: curve.rel_lp,
        flags: curve.flags.into_iter().map(Some).collect(),
        estimates,
        boundary,
        status: RowStatus::Ok {
            n: window.len(),
            mle_tc_offset: mle.params.nonlinear.tc - series.time_of(t2),
        },
    }
}

/// Computes the surface for every window size in `cfg.dt`.
///
/// Windows that fail (too few observations, outside the series, no usable
/// grid point) become missing rows; the scan itself only fails on invalid
/// ranges.
pub fn scan(
    series: &PriceSeries,
    t2: NaiveDate,
    cfg: &ScanConfig,
) -> Result<MultiscaleSurface, MultiscaleError> {
    if !(cfg.cutoff > 0.0 && cfg.cutoff < 1.0) {
        return Err(MultiscaleError::InvalidCutoff(cfg.cutoff));
    }
    let dt_values = cfg.dt.values()?;
    let rows: Vec<Row> = dt_values
        .par_iter()
        .map(|&dt| scan_row(series, t2, dt, cfg))
        .collect();
    let tc_offsets = cfg
        .tc
        .offsets()
        .into_iter()
        .map(|o| o as f64 + 0.5)
        .collect();
    let mut surface = MultiscaleSurface {
        schema_version: SURFACE_SCHEMA_VERSION,
        t2,
        dt_values,
        tc_offsets,
        rel_lm: Vec::new(),
        rel_lp: Vec::new(),
        flags: Vec::new(),
        estimates: Vec::new(),
        qualified_strict: Vec::new(),
        qualified_confidence: Vec::new(),
        boundary_rows: Vec::new(),
        row_status: Vec::new(),
        cutoff: cfg.cutoff,
        bounds: cfg.calibration.bounds,
    };
    for row in rows {
        surface.rel_lm.push(row.rel_lm);
        surface.rel_lp.push(row.rel_lp);
        surface.flags.push(row.flags);
        surface.estimates.push(row.estimates);
        surface.boundary_rows.push(row.boundary);
        surface.row_status.push(row.status);
    }
    surface.qualified_strict = qualify_cells(&surface, FilterMode::Strict, true)?;
    surface.qualified_confidence = qualify_cells(&surface, FilterMode::ConfidenceAware, true)?;
    Ok(surface)
}

/// Qualification mask for `mode`.
///
/// Cells without a modified likelihood value are never qualified. In
/// confidence-aware mode, rows whose maximum sits on the grid boundary fall
/// back to the strict test because their intervals are unreliable.
pub fn qualify_surface(
    surface: &MultiscaleSurface,
    mode: FilterMode,
) -> Result<Vec<Vec<bool>>, MultiscaleError> {
    qualify_cells(surface, mode, false)
}

/// With `lenient`, cells lacking interval data use the strict test instead
/// of failing.
fn qualify_cells(
    surface: &MultiscaleSurface,
    mode: FilterMode,
    lenient: bool,
) -> Result<Vec<Vec<bool>>, MultiscaleError> {
    let mut mask = Vec::with_capacity(surface.rel_lm.len());
    for (r, row) in surface.rel_lm.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (c, rel) in row.iter().enumerate() {
            let est = match (rel, &surface.estimates[r][c]) {
                (Some(_), Some(e)) => e,
                _ => {
                    out.push(false);
                    continue;
                }
            };
            let params = est.params();
            let strict = model::qualify(&params, None, FilterMode::Strict, &surface.bounds)
                .expect("strict qualification needs no intervals");
            let ok = match mode {
                FilterMode::Strict => strict.qualified(),
                FilterMode::ConfidenceAware if surface.boundary_rows[r] => strict.qualified(),
                FilterMode::ConfidenceAware => match est.intervals {
                    Some(iv) => model::qualify(&params, Some(&iv), mode, &surface.bounds)
                        .expect("intervals supplied")
                        .qualified(),
                    None if lenient => strict.qualified(),
                    None => return Err(MultiscaleError::MissingIntervals { row: r, col: c }),
                },
            };
            out.push(ok);
        }
        mask.push(out);
    }
    Ok(mask)
}

impl MultiscaleSurface {
    pub fn rows(&self) -> usize {
        self.dt_values.len()
    }

    pub fn cols(&self) -> usize {
        self.tc_offsets.len()
    }

    /// Relative likelihood curve of one row over `tc` offsets.
    pub fn row_curve(&self, row: usize) -> LikelihoodCurve {
        let cols = self.cols();
        LikelihoodCurve {
            parameter: Parameter::Tc,
            n: match self.row_status[row] {
                RowStatus::Ok { n, .. } => n,
                RowStatus::Missing { .. } => 0,
            },
            grid: self.tc_offsets.clone(),
            f2: vec![f64::NAN; cols],
            log_lp: vec![None; cols],
            log_lm: vec![None; cols],
            rel_lp: self.rel_lp[row].clone(),
            rel_lm: self.rel_lm[row].clone(),
            flags: self.flags[row]
                .iter()
                .map(|f| f.unwrap_or(PointFlag::Degenerate))
                .collect(),
        }
    }

    /// Long-format CSV: `dt, tc_offset, rel_lm, strict, confidence, flag`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["dt", "tc_offset", "rel_lm", "strict", "confidence", "flag"])?;
        for (r, dt) in self.dt_values.iter().enumerate() {
            for (c, off) in self.tc_offsets.iter().enumerate() {
                let flag = match (&self.row_status[r], self.flags[r][c]) {
                    (RowStatus::Missing { .. }, _) => "missing",
                    (_, Some(f)) => f.as_str(),
                    (_, None) => "missing",
                };
                let flag = if self.boundary_rows[r] && flag == "ok" {
                    "boundary_row"
                } else {
                    flag
                };
                w.write_record([
                    dt.to_string(),
                    off.to_string(),
                    self.rel_lm[r][c].map(|v| format!("{v:e}")).unwrap_or_default(),
                    self.qualified_strict[r][c].to_string(),
                    self.qualified_confidence[r][c].to_string(),
                    flag.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSegments {
    pub cutoff: f64,
    pub segments: Vec<[f64; 2]>,
    pub boundary_touched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourRow {
    pub dt: i64,
    pub boundary_row: bool,
    pub levels: Vec<CutoffSegments>,
}

/// Grid-plus-segments export for external contour plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourExport {
    pub schema_version: u32,
    pub t2: NaiveDate,
    pub dt_values: Vec<i64>,
    pub tc_offsets: Vec<f64>,
    pub cutoffs: Vec<f64>,
    pub rel_lm: Vec<Vec<Option<f64>>>,
    pub rows: Vec<ContourRow>,
    pub qualified_strict: Vec<Vec<bool>>,
    pub qualified_confidence: Vec<Vec<bool>>,
}

/// Per-row threshold segments at each cutoff, with the qualification masks.
pub fn contour_export(
    surface: &MultiscaleSurface,
    cutoffs: &[f64],
) -> Result<ContourExport, MultiscaleError> {
    if let Some(&bad) = cutoffs.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
        return Err(MultiscaleError::InvalidCutoff(bad));
    }
    let rows = (0..surface.rows())
        .map(|r| {
            let curve = surface.row_curve(r);
            let levels = cutoffs
                .iter()
                .filter_map(|&c| {
                    intervals::likelihood_interval(&curve, Which::Lm, c)
                        .ok()
                        .map(|li: LikelihoodInterval| CutoffSegments {
                            cutoff: c,
                            segments: li.segments,
                            boundary_touched: li.boundary_touched || surface.boundary_rows[r],
                        })
                })
                .collect();
            ContourRow {
                dt: surface.dt_values[r],
                boundary_row: surface.boundary_rows[r],
                levels,
            }
        })
        .collect();
    Ok(ContourExport {
        schema_version: SURFACE_SCHEMA_VERSION,
        t2: surface.t2,
        dt_values: surface.dt_values.clone(),
        tc_offsets: surface.tc_offsets.clone(),
        cutoffs: cutoffs.to_vec(),
        rel_lm: surface.rel_lm.clone(),
        rows,
        qualified_strict: surface.qualified_strict.clone(),
        qualified_confidence: surface.qualified_confidence.clone(),
    })
}
