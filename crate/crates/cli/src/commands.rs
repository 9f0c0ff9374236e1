use std::io::Write;

use chrono::{Duration, NaiveDate};
use serde::Serialize;

use lppls::calibrate::{self, CalibrationConfig, FitResult, ProfilePoint};
use lppls::intervals::{self, IntervalError, LikelihoodInterval, NuisanceInterval};
use lppls::likelihood::{
    self, LikelihoodCurve, Parameter, PointFlag, Which,
};
use lppls::model::QualificationFlags;
use lppls::multiscale::{self, ContourExport, DtRange, MultiscaleSurface, RowStatus, ScanConfig};
use lppls::series::{self, Gap, PriceSeries, Window};
use lppls::synthetic::{self, Calendar, GeneratorSpec};

use crate::args::{
    CalendarArg, DataArgs, FitArgs, Filter, Format, MultiscaleArgs, NuisanceArgs, ProfileArgs,
    SynthArgs,
};
use crate::config::{self, RunConfig, SCHEMA_VERSION};
use crate::error::CliError;
use crate::output::{warn, Sink};

#[derive(Debug, Clone, Serialize)]
pub struct InputSummary {
    pub path: String,
    pub n: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub gaps: Vec<Gap>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowSummary {
    pub t1: NaiveDate,
    pub t2: NaiveDate,
    pub n: usize,
}

struct Loaded {
    series: PriceSeries,
    summary: InputSummary,
    t2: NaiveDate,
}

fn load(data: &DataArgs, cfg: &mut RunConfig) -> Result<Loaded, CliError> {
    config::check_min_observations(data.min_observations)?;
    let raw = series::load_csv(&data.input)?;
    let (series, gaps) = series::fill_gaps(&raw, data.max_gap_days);
    for g in gaps.iter().filter(|g| !g.filled) {
        warn(&format!("gap {} to {} left unfilled", g.start, g.end));
    }
    let t2 = data.t2.unwrap_or(series.last_date());
    cfg.input = Some(data.input.display().to_string());
    cfg.t2 = Some(t2);
    cfg.max_gap_days = Some(data.max_gap_days);
    cfg.min_observations = Some(data.min_observations);
    let summary = InputSummary {
        path: data.input.display().to_string(),
        n: series.len(),
        first_date: series.first_date(),
        last_date: series.last_date(),
        gaps,
    };
    Ok(Loaded { series, summary, t2 })
}

fn calibration_window(
    loaded: &Loaded,
    days: i64,
    min_obs: usize,
) -> Result<(PriceSeries, WindowSummary), CliError> {
    let w = Window::ending_at(loaded.t2, days)?;
    let sub = loaded.series.calibration_window(&w, min_obs)?;
    let summary = WindowSummary {
        t1: w.t1,
        t2: w.t2,
        n: sub.len(),
    };
    Ok((sub, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub tc: f64,
    pub tc_offset_days: f64,
    pub tc_date: NaiveDate,
    pub m: f64,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
    pub phi: f64,
    pub damping: Option<f64>,
    pub s_mle: f64,
    pub s_unbiased: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub sse: f64,
    pub n: usize,
    pub converged: bool,
    pub condition_number: f64,
    pub boundary: bool,
    pub grid_index: usize,
    pub n_restarts_used: usize,
}

fn estimate(series: &PriceSeries, t2: NaiveDate, fit: &FitResult) -> Estimate {
    let p = &fit.params;
    let d = fit.damping();
    Estimate {
        tc: p.nonlinear.tc,
        tc_offset_days: p.nonlinear.tc - series.time_of(t2),
        tc_date: series.date_at(p.nonlinear.tc),
        m: p.nonlinear.m,
        omega: p.nonlinear.omega,
        a: p.linear.a,
        b: p.linear.b,
        c1: p.linear.c1,
        c2: p.linear.c2,
        c: p.linear.c(),
        phi: p.linear.phi(),
        damping: d.is_finite().then_some(d),
        s_mle: likelihood::sigma2_mle(fit.sse, fit.n),
        s_unbiased: likelihood::sigma2_unbiased(fit.sse, fit.n).ok(),
    }
}

fn diagnostics(fit: &FitResult) -> Diagnostics {
    Diagnostics {
        sse: fit.sse,
        n: fit.n,
        converged: fit.converged,
        condition_number: fit.condition_number,
        boundary: fit.boundary,
        grid_index: fit.grid_index,
        n_restarts_used: fit.n_restarts_used,
    }
}

fn fit_warnings(fit: &FitResult) -> Vec<String> {
    let mut w = Vec::new();
    if fit.boundary {
        w.push("cost minimum lies on the edge of the tc grid".to_string());
    }
    if !fit.converged {
        w.push("optimizer did not converge at the best grid point".to_string());
    }
    w
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct FitReport<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    input: &'a InputSummary,
    window: &'a WindowSummary,
    estimate: &'a Estimate,
    qualification: QualificationFlags,
    diagnostics: &'a Diagnostics,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    files: Vec<String>,
    warnings: &'a [String],
}

fn write_manifest(sink: &mut Sink, cfg: &RunConfig, warnings: &[String]) -> Result<(), CliError> {
    if sink.dir.is_none() {
        return Ok(());
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        files: sink.files().to_vec(),
        warnings,
    };
    sink.json("run.json", &manifest)
}

fn base_calibration(cfg: &mut RunConfig) -> CalibrationConfig {
    let c = CalibrationConfig::default();
    cfg.calibration = Some(c.clone());
    c
}

pub fn fit(args: &FitArgs, mut cfg: RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    config::check_window_days(args.window_days)?;
    let tc = config::tc_range(&args.tc)?;
    cfg.window_days = Some(args.window_days);
    cfg.tc = Some(tc);
    cfg.seed = args.seed;
    let cal = base_calibration(&mut cfg);
    let loaded = load(&args.data, &mut cfg)?;
    let (window, wsum) = calibration_window(&loaded, args.window_days, args.data.min_observations)?;

    let grid = tc.grid(window.time_of(loaded.t2));
    let fit = calibrate::full_mle(&window, &grid, &cal)?;
    let est = estimate(&window, loaded.t2, &fit);
    let diag = diagnostics(&fit);
    let warnings = fit_warnings(&fit);
    for w in &warnings {
        warn(w);
    }

    match sink.format {
        Format::Json => sink.json(
            "fit.json",
            &FitReport {
                schema_version: SCHEMA_VERSION,
                config: &cfg,
                input: &loaded.summary,
                window: &wsum,
                estimate: &est,
                qualification: fit.qualification,
                diagnostics: &diag,
                warnings: &warnings,
            },
        )?,
        Format::Csv => {
            sink.csv("fit.csv", true, |w| {
                let q = fit.qualification;
                let rows: Vec<(&str, String)> = vec![
                    ("tc", est.tc.to_string()),
                    ("tc_offset_days", est.tc_offset_days.to_string()),
                    ("tc_date", est.tc_date.to_string()),
                    ("m", est.m.to_string()),
                    ("omega", est.omega.to_string()),
                    ("a", est.a.to_string()),
                    ("b", est.b.to_string()),
                    ("c1", est.c1.to_string()),
                    ("c2", est.c2.to_string()),
                    ("c", est.c.to_string()),
                    ("phi", est.phi.to_string()),
                    ("damping", opt(est.damping)),
                    ("s_mle", est.s_mle.to_string()),
                    ("s_unbiased", opt(est.s_unbiased)),
                    ("qualified", q.qualified().to_string()),
                    ("sse", diag.sse.to_string()),
                    ("n", diag.n.to_string()),
                    ("converged", diag.converged.to_string()),
                    ("condition_number", diag.condition_number.to_string()),
                    ("boundary", diag.boundary.to_string()),
                ];
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["key", "value"])?;
                for (k, v) in rows {
                    c.write_record([k, v.as_str()])?;
                }
                c.flush()?;
                Ok(())
            })?;
            write_manifest(sink, &cfg, &warnings)?;
        }
    }
    if !fit.converged {
        return Err(CliError::Convergence(
            "calibration did not converge; see the report diagnostics".to_string(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub x: f64,
    pub f2: Option<f64>,
    pub log_lp: Option<f64>,
    pub log_lm: Option<f64>,
    pub rel_lp: Option<f64>,
    pub rel_lm: Option<f64>,
    pub flag: PointFlag,
}

fn curve_rows(curve: &LikelihoodCurve, shift: f64) -> Vec<CurveRow> {
    (0..curve.len())
        .map(|i| CurveRow {
            x: curve.grid[i] - shift,
            f2: curve.f2[i].is_finite().then_some(curve.f2[i]),
            log_lp: curve.log_lp[i],
            log_lm: curve.log_lm[i],
            rel_lp: curve.rel_lp[i],
            rel_lm: curve.rel_lm[i],
            flag: curve.flags[i],
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalReport {
    pub curve: &'static str,
    pub cutoff: f64,
    pub segments: Vec<[f64; 2]>,
    pub boundary_touched: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn interval_report(
    curve: &LikelihoodCurve,
    which: Which,
    cutoff: f64,
    shift: f64,
) -> IntervalReport {
    let name = match which {
        Which::Lp => "lp",
        Which::Lm => "lm",
    };
    match intervals::likelihood_interval(curve, which, cutoff) {
        Ok(LikelihoodInterval {
            segments,
            boundary_touched,
            ..
        }) => IntervalReport {
            curve: name,
            cutoff,
            segments: segments.iter().map(|s| [s[0] - shift, s[1] - shift]).collect(),
            boundary_touched,
            error: None,
        },
        Err(e) => IntervalReport {
            curve: name,
            cutoff,
            segments: Vec::new(),
            boundary_touched: false,
            error: Some(e.to_string()),
        },
    }
}

fn write_intervals(w: &mut dyn Write, reports: &[&IntervalReport]) -> Result<(), CliError> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["curve", "cutoff", "segment", "lo", "hi", "boundary_touched"])?;
    for r in reports {
        for (k, s) in r.segments.iter().enumerate() {
            c.write_record([
                r.curve.to_string(),
                r.cutoff.to_string(),
                k.to_string(),
                s[0].to_string(),
                s[1].to_string(),
                r.boundary_touched.to_string(),
            ])?;
        }
    }
    c.flush()?;
    Ok(())
}

/// Interior and edge points of the modified likelihood that beat both neighbours.
fn local_maxima(curve: &LikelihoodCurve, floor: f64, shift: f64) -> Vec<Maximum> {
    let pts: Vec<(f64, f64)> = curve
        .grid
        .iter()
        .zip(&curve.rel_lm)
        .filter_map(|(&x, r)| r.map(|r| (x, r)))
        .collect();
    let mut out: Vec<Maximum> = (0..pts.len())
        .filter(|&i| {
            let left = i == 0 || pts[i].1 > pts[i - 1].1;
            let right = i + 1 == pts.len() || pts[i].1 >= pts[i + 1].1;
            left && right && pts[i].1 > floor
        })
        .map(|i| Maximum {
            tc_offset_days: pts[i].0 - shift,
            rel_lm: pts[i].1,
        })
        .collect();
    out.sort_by(|a, b| b.rel_lm.total_cmp(&a.rel_lm));
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Maximum {
    pub tc_offset_days: f64,
    pub rel_lm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TcNuisanceRow {
    pub tc_offset_days: f64,
    pub m: f64,
    pub omega: f64,
    pub damping: Option<f64>,
    pub m_half_width: Option<f64>,
    pub omega_half_width: Option<f64>,
    pub damping_half_width: Option<f64>,
}

fn nuisance_rows(
    window: &PriceSeries,
    profile: &[ProfilePoint],
    curve: &LikelihoodCurve,
    cutoff: f64,
    shift: f64,
) -> Vec<TcNuisanceRow> {
    profile
        .iter()
        .zip(&curve.flags)
        .filter(|(_, f)| f.lp_valid())
        .map(|(p, _)| {
            let params = p.params();
            let fisher = likelihood::fisher_blocks(window, &params).ok();
            let half = |which: Parameter| {
                fisher.as_ref().and_then(|fb| {
                    intervals::approx_nuisance_interval(fb, which, cutoff)
                        .ok()
                        .map(|i| i.half_width)
                })
            };
            let d = params.damping();
            TcNuisanceRow {
                tc_offset_days: p.tc - shift,
                m: p.m_hat,
                omega: p.omega_hat,
                damping: d.is_finite().then_some(d),
                m_half_width: half(Parameter::M),
                omega_half_width: half(Parameter::Omega),
                damping_half_width: fisher
                    .as_ref()
                    .and_then(|fb| intervals::damping_interval(fb, cutoff).ok())
                    .map(|i| i.half_width),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ProfileReport<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    input: &'a InputSummary,
    window: &'a WindowSummary,
    mle: &'a Estimate,
    diagnostics: &'a Diagnostics,
    curve: &'a [CurveRow],
    maxima: &'a [Maximum],
    intervals: &'a [IntervalReport],
    nuisance_cutoff: f64,
    nuisance: &'a [TcNuisanceRow],
    warnings: &'a [String],
}

pub fn profile(args: &ProfileArgs, mut cfg: RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let fa = &args.fit;
    config::check_window_days(fa.window_days)?;
    config::check_cutoffs(&args.cutoffs)?;
    let tc = config::tc_range(&fa.tc)?;
    cfg.window_days = Some(fa.window_days);
    cfg.tc = Some(tc);
    cfg.cutoffs = Some(args.cutoffs.clone());
    cfg.seed = fa.seed;
    let cal = base_calibration(&mut cfg);
    let loaded = load(&fa.data, &mut cfg)?;
    let (window, wsum) = calibration_window(&loaded, fa.window_days, fa.data.min_observations)?;

    let shift = window.time_of(loaded.t2);
    let grid = tc.grid(shift);
    let points = calibrate::profile_f2(&window, &grid, &cal)?;
    let fit = calibrate::mle_from_profile(&window, &points, &cal)?;
    let curve = likelihood::modified_profile_likelihood(&window, &points, &fit)?;

    let mut reports = Vec::new();
    for &c in &args.cutoffs {
        reports.push(interval_report(&curve, Which::Lp, c, shift));
        reports.push(interval_report(&curve, Which::Lm, c, shift));
    }
    let mut warnings = fit_warnings(&fit);
    for r in &reports {
        if r.boundary_touched {
            warnings.push(format!(
                "{} interval at cutoff {} reaches the edge of the tc grid",
                r.curve, r.cutoff
            ));
        }
        if let Some(e) = &r.error {
            warnings.push(format!("{} interval at cutoff {}: {e}", r.curve, r.cutoff));
        }
    }
    for w in &warnings {
        warn(w);
    }
    let floor = args.cutoffs.iter().copied().fold(f64::INFINITY, f64::min);
    let maxima = local_maxima(&curve, floor, shift);
    let nuisance_cutoff = args.cutoffs[0];
    let nuisance = nuisance_rows(&window, &points, &curve, nuisance_cutoff, shift);
    let est = estimate(&window, loaded.t2, &fit);
    let diag = diagnostics(&fit);

    match sink.format {
        Format::Json => sink.json(
            "profile.json",
            &ProfileReport {
                schema_version: SCHEMA_VERSION,
                config: &cfg,
                input: &loaded.summary,
                window: &wsum,
                mle: &est,
                diagnostics: &diag,
                curve: &curve_rows(&curve, shift),
                maxima: &maxima,
                intervals: &reports,
                nuisance_cutoff,
                nuisance: &nuisance,
                warnings: &warnings,
            },
        )?,
        Format::Csv => {
            sink.csv("curve_tc.csv", true, |w| Ok(curve.write_csv(w, shift)?))?;
            for which in ["lp", "lm"] {
                let chosen: Vec<&IntervalReport> =
                    reports.iter().filter(|r| r.curve == which).collect();
                sink.csv(&format!("intervals_{which}.csv"), false, |w| {
                    write_intervals(w, &chosen)
                })?;
            }
            sink.csv("nuisance_tc.csv", false, |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record([
                    "tc_offset_days",
                    "m",
                    "omega",
                    "damping",
                    "m_half_width",
                    "omega_half_width",
                    "damping_half_width",
                ])?;
                for r in &nuisance {
                    c.write_record([
                        r.tc_offset_days.to_string(),
                        r.m.to_string(),
                        r.omega.to_string(),
                        opt(r.damping),
                        opt(r.m_half_width),
                        opt(r.omega_half_width),
                        opt(r.damping_half_width),
                    ])?;
                }
                c.flush()?;
                Ok(())
            })?;
            write_manifest(sink, &cfg, &warnings)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct NuisanceReport<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    input: &'a InputSummary,
    window: &'a WindowSummary,
    mle: &'a Estimate,
    tc: f64,
    tc_offset_days: f64,
    m_curve: &'a [CurveRow],
    omega_curve: &'a [CurveRow],
    likelihood_intervals: &'a [NuisanceLi],
    approximate_intervals: &'a [NuisanceInterval],
    warnings: &'a [String],
}

#[derive(Debug, Clone, Serialize)]
struct NuisanceLi {
    parameter: Parameter,
    #[serde(flatten)]
    interval: IntervalReport,
}

/// Grid points above the 0.05 level where the profile and modified curves
/// differ by 0.05 or more.
fn disagreement(param: Parameter, curve: &LikelihoodCurve) -> Option<String> {
    let gaps: Vec<(f64, f64)> = curve
        .grid
        .iter()
        .zip(curve.rel_lp.iter().zip(&curve.rel_lm))
        .filter_map(|(&x, (a, b))| Some((x, (*a)?, (*b)?)))
        .filter(|(_, a, b)| a.max(*b) > 0.05 && (a - b).abs() >= 0.05)
        .map(|(x, a, b)| (x, (a - b).abs()))
        .collect();
    let worst = gaps.iter().max_by(|a, b| a.1.total_cmp(&b.1))?;
    Some(format!(
        "{} profile and modified curves disagree at {} grid points (largest gap {:.3} at {})",
        param.as_str(),
        gaps.len(),
        worst.1,
        worst.0
    ))
}

pub fn nuisance(args: &NuisanceArgs, mut cfg: RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let fa = &args.profile.fit;
    let cutoffs = &args.profile.cutoffs;
    config::check_window_days(fa.window_days)?;
    config::check_cutoffs(cutoffs)?;
    let tc_range = config::tc_range(&fa.tc)?;
    let m_grid = config::param_grid("m", args.m_min, args.m_max, args.m_step)?;
    let omega_grid = config::param_grid("omega", args.omega_min, args.omega_max, args.omega_step)?;
    if let Some(o) = args.tc_offset {
        if !o.is_finite() {
            return Err(CliError::usage("--tc-offset must be finite"));
        }
    }
    cfg.window_days = Some(fa.window_days);
    cfg.tc = Some(tc_range);
    cfg.cutoffs = Some(cutoffs.clone());
    cfg.tc_offset = args.tc_offset;
    cfg.m_grid = Some(m_grid);
    cfg.omega_grid = Some(omega_grid);
    cfg.seed = fa.seed;
    let cal = base_calibration(&mut cfg);
    let loaded = load(&fa.data, &mut cfg)?;
    let (window, wsum) = calibration_window(&loaded, fa.window_days, fa.data.min_observations)?;

    let shift = window.time_of(loaded.t2);
    let fit = calibrate::full_mle(&window, &tc_range.grid(shift), &cal)?;
    let tc = args.tc_offset.map(|o| shift + o).unwrap_or(fit.params.nonlinear.tc);
    let point = calibrate::minimize_f1(&window, tc, None, &cal)?;
    if !point.usable() {
        return Err(CliError::Convergence(format!(
            "no usable subordinated fit at tc offset {}",
            tc - shift
        )));
    }

    let m_curve = intervals::nuisance_profile(&window, tc, Parameter::M, &m_grid.values(), &fit.params, &cal)?;
    let omega_curve =
        intervals::nuisance_profile(&window, tc, Parameter::Omega, &omega_grid.values(), &fit.params, &cal)?;
    let fisher = likelihood::fisher_blocks(&window, &point.params())?;

    let mut lis = Vec::new();
    let mut approx = Vec::new();
    let mut warnings = fit_warnings(&fit);
    for &c in cutoffs {
        for (param, curve) in [(Parameter::M, &m_curve), (Parameter::Omega, &omega_curve)] {
            for which in [Which::Lp, Which::Lm] {
                let interval = interval_report(curve, which, c, 0.0);
                if interval.boundary_touched {
                    warnings.push(format!(
                        "{} {} interval at cutoff {c} reaches the edge of its grid",
                        param.as_str(),
                        interval.curve
                    ));
                }
                lis.push(NuisanceLi {
                    parameter: param,
                    interval,
                });
            }
            match intervals::approx_nuisance_interval(&fisher, param, c) {
                Ok(i) => approx.push(i),
                Err(IntervalError::NotInvertible(k)) => warnings.push(format!(
                    "information matrix not invertible (condition {k:.3e}); no approximate {} interval",
                    param.as_str()
                )),
                Err(e) => return Err(e.into()),
            }
        }
        match intervals::damping_interval(&fisher, c) {
            Ok(i) => approx.push(i),
            Err(e) => warnings.push(format!("no damping interval at cutoff {c}: {e}")),
        }
    }
    for (param, curve) in [(Parameter::M, &m_curve), (Parameter::Omega, &omega_curve)] {
        if let Some(w) = disagreement(param, curve) {
            warnings.push(w);
        }
    }
    for w in &warnings {
        warn(w);
    }
    let est = estimate(&window, loaded.t2, &fit);

    match sink.format {
        Format::Json => sink.json(
            "nuisance.json",
            &NuisanceReport {
                schema_version: SCHEMA_VERSION,
                config: &cfg,
                input: &loaded.summary,
                window: &wsum,
                mle: &est,
                tc,
                tc_offset_days: tc - shift,
                m_curve: &curve_rows(&m_curve, 0.0),
                omega_curve: &curve_rows(&omega_curve, 0.0),
                likelihood_intervals: &lis,
                approximate_intervals: &approx,
                warnings: &warnings,
            },
        )?,
        Format::Csv => {
            sink.csv("curve_m.csv", true, |w| Ok(m_curve.write_csv(w, 0.0)?))?;
            sink.csv("curve_omega.csv", false, |w| Ok(omega_curve.write_csv(w, 0.0)?))?;
            sink.csv("intervals.csv", false, |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["parameter", "kind", "cutoff", "lo", "hi", "boundary_touched"])?;
                for li in &lis {
                    for s in &li.interval.segments {
                        c.write_record([
                            li.parameter.as_str().to_string(),
                            li.interval.curve.to_string(),
                            li.interval.cutoff.to_string(),
                            s[0].to_string(),
                            s[1].to_string(),
                            li.interval.boundary_touched.to_string(),
                        ])?;
                    }
                }
                for a in &approx {
                    c.write_record([
                        a.parameter.as_str().to_string(),
                        "approx".to_string(),
                        a.cutoff.to_string(),
                        a.lo().to_string(),
                        a.hi().to_string(),
                        "false".to_string(),
                    ])?;
                }
                c.flush()?;
                Ok(())
            })?;
            write_manifest(sink, &cfg, &warnings)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct MissingRow {
    pub dt: i64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceSummary {
    pub rows: usize,
    pub cols: usize,
    pub rows_ok: usize,
    pub missing_rows: Vec<MissingRow>,
    pub boundary_rows: Vec<i64>,
    pub strict_count: usize,
    pub confidence_count: usize,
}

#[derive(Serialize)]
struct MultiscaleReport<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    input: &'a InputSummary,
    summary: &'a SurfaceSummary,
    filter: Filter,
    qualified: Option<&'a Vec<Vec<bool>>>,
    surface: &'a MultiscaleSurface,
    contour: &'a ContourExport,
    warnings: &'a [String],
}

fn count(mask: &[Vec<bool>]) -> usize {
    mask.iter().flatten().filter(|b| **b).count()
}

pub fn multiscale(args: &MultiscaleArgs, mut cfg: RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    config::check_cutoffs(&args.cutoffs)?;
    let tc = config::tc_range(&args.tc)?;
    let dt = DtRange {
        min: args.dt_min,
        max: args.dt_max,
        step: args.dt_step,
    };
    dt.values()?;
    cfg.tc = Some(tc);
    cfg.dt = Some(dt);
    cfg.cutoffs = Some(args.cutoffs.clone());
    cfg.filter = Some(args.filter);
    cfg.seed = args.seed;
    let cal = base_calibration(&mut cfg);
    let loaded = load(&args.data, &mut cfg)?;

    let scan_cfg = ScanConfig {
        dt,
        tc,
        cutoff: args.cutoffs[0],
        min_observations: args.data.min_observations,
        calibration: cal,
    };
    let surface = multiscale::scan(&loaded.series, loaded.t2, &scan_cfg)?;
    let contour = multiscale::contour_export(&surface, &args.cutoffs)?;

    let missing_rows: Vec<MissingRow> = surface
        .row_status
        .iter()
        .zip(&surface.dt_values)
        .filter_map(|(s, &dt)| match s {
            RowStatus::Missing { reason } => Some(MissingRow {
                dt,
                reason: reason.clone(),
            }),
            RowStatus::Ok { .. } => None,
        })
        .collect();
    let summary = SurfaceSummary {
        rows: surface.rows(),
        cols: surface.cols(),
        rows_ok: surface.rows() - missing_rows.len(),
        boundary_rows: surface
            .dt_values
            .iter()
            .zip(&surface.boundary_rows)
            .filter_map(|(&d, &b)| b.then_some(d))
            .collect(),
        missing_rows,
        strict_count: count(&surface.qualified_strict),
        confidence_count: count(&surface.qualified_confidence),
    };
    let mut warnings: Vec<String> = summary
        .missing_rows
        .iter()
        .map(|m| format!("window of {} days skipped: {}", m.dt, m.reason))
        .collect();
    if !summary.boundary_rows.is_empty() {
        warnings.push(format!(
            "likelihood maximum on the tc grid edge for windows {:?}",
            summary.boundary_rows
        ));
    }
    for w in &warnings {
        warn(w);
    }
    let qualified = match args.filter {
        Filter::Strict => Some(&surface.qualified_strict),
        Filter::Confidence => Some(&surface.qualified_confidence),
        Filter::None => None,
    };

    match sink.format {
        Format::Json => sink.json(
            "multiscale.json",
            &MultiscaleReport {
                schema_version: SCHEMA_VERSION,
                config: &cfg,
                input: &loaded.summary,
                summary: &summary,
                filter: args.filter,
                qualified,
                surface: &surface,
                contour: &contour,
                warnings: &warnings,
            },
        )?,
        Format::Csv => {
            sink.csv("surface.csv", true, |w| Ok(surface.write_csv(w)?))?;
            let bytes = serde_json::to_vec_pretty(&contour)?;
            sink.file_only("contour.json", &bytes)?;
            write_manifest(sink, &cfg, &warnings)?;
        }
    }
    if summary.rows_ok == 0 {
        return Err(CliError::Data("no window size produced a likelihood row".to_string()));
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthMeta<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    spec: &'a GeneratorSpec,
    rng: &'static str,
    n: usize,
    first_date: NaiveDate,
    last_date: NaiveDate,
    damping: f64,
    skipped: &'a [NaiveDate],
}

fn resolve_spec(a: &SynthArgs) -> Result<GeneratorSpec, CliError> {
    let base = synthetic::reference_spec();
    if !a.reference_defaults {
        let missing: Vec<&str> = [
            ("--tc0", a.tc0.is_none()),
            ("--m0", a.m0.is_none()),
            ("--omega0", a.omega0.is_none()),
            ("--phi0", a.phi0.is_none()),
            ("--a0", a.a0.is_none()),
            ("--b0", a.b0.is_none()),
            ("--c0", a.c0.is_none()),
            ("--sigma0", a.sigma0.is_none()),
        ]
        .into_iter()
        .filter_map(|(name, absent)| absent.then_some(name))
        .collect();
        if !missing.is_empty() {
            return Err(CliError::usage(format!(
                "missing {} (or pass --paper-defaults)",
                missing.join(", ")
            )));
        }
    }
    let tc0 = a.tc0.unwrap_or(base.tc0);
    Ok(GeneratorSpec {
        tc0,
        m0: a.m0.unwrap_or(base.m0),
        omega0: a.omega0.unwrap_or(base.omega0),
        phi0: a.phi0.unwrap_or(base.phi0),
        a0: a.a0.unwrap_or(base.a0),
        b0: a.b0.unwrap_or(base.b0),
        c0: a.c0.unwrap_or(base.c0),
        sigma0: a.sigma0.unwrap_or(base.sigma0),
        start: a.start.unwrap_or(tc0 - Duration::days(800)),
        end: a.end.unwrap_or(tc0 - Duration::days(1)),
        calendar: match a.calendar {
            CalendarArg::BusinessDays => Calendar::BusinessDays,
            CalendarArg::Daily => Calendar::Daily,
        },
        seed: a.seed,
    })
}

pub fn synth(args: &SynthArgs, mut cfg: RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let spec = resolve_spec(args)?;
    spec.validate()?;
    cfg.seed = Some(spec.seed);
    cfg.generator = Some(spec.clone());
    cfg.rng = Some(synthetic::RNG_ALGORITHM);
    let generated = synthetic::generate(&spec)?;
    let s = &generated.series;
    sink.csv("series.csv", true, |w| Ok(series::write_csv(s, w)?))?;
    let meta = SynthMeta {
        schema_version: SCHEMA_VERSION,
        config: &cfg,
        spec: &spec,
        rng: synthetic::RNG_ALGORITHM,
        n: s.len(),
        first_date: s.first_date(),
        last_date: s.last_date(),
        damping: spec.damping(),
        skipped: &generated.skipped,
    };
    let bytes = serde_json::to_vec_pretty(&meta)?;
    sink.file_only("series.meta.json", &bytes)?;
    Ok(())
}
