use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lppls", version, about = "LPPLS calibration and likelihood inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Directory for output files; results go to stdout when omitted.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate one window and report the point estimates.
    Fit(FitArgs),
    /// Profile and modified profile likelihood of tc with likelihood intervals.
    Profile(ProfileArgs),
    /// Likelihood profiles of m and omega at a fixed tc.
    Nuisance(NuisanceArgs),
    /// Relative modified profile likelihood over window sizes and tc.
    Multiscale(MultiscaleArgs),
    /// Generate a synthetic LPPLS series with Gaussian noise.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Strict,
    Confidence,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with a `date,close` header.
    #[arg(long)]
    pub input: PathBuf,

    /// End of the calibration window (defaults to the last observation).
    #[arg(long)]
    pub t2: Option<NaiveDate>,

    /// Fill exchange closures of up to this many business days with the previous close.
    #[arg(long, default_value_t = 0)]
    pub max_gap_days: usize,

    /// Smallest accepted number of observations in a window.
    #[arg(long, default_value_t = 30)]
    pub min_observations: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TcArgs {
    #[arg(long, default_value_t = -50, allow_negative_numbers = true)]
    pub tc_min_offset: i64,

    #[arg(long, default_value_t = 150, allow_negative_numbers = true)]
    pub tc_max_offset: i64,

    #[arg(long, default_value_t = 1)]
    pub tc_step: i64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub tc: TcArgs,

    /// Window length in calendar days.
    #[arg(long, default_value_t = 300)]
    pub window_days: i64,

    /// Accepted for interface symmetry; calibration is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub fit: FitArgs,

    /// Relative likelihood cutoff; repeat for several levels.
    #[arg(long = "cutoff", default_values_t = vec![0.05])]
    pub cutoffs: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct NuisanceArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,

    /// tc offset from t2 in days (defaults to the maximum likelihood estimate).
    #[arg(long, allow_negative_numbers = true)]
    pub tc_offset: Option<f64>,

    #[arg(long, default_value_t = 0.05)]
    pub m_min: f64,
    #[arg(long, default_value_t = 1.5)]
    pub m_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub m_step: f64,

    #[arg(long, default_value_t = 2.0)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub omega_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub omega_step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct MultiscaleArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub tc: TcArgs,

    #[arg(long, default_value_t = 60)]
    pub dt_min: i64,
    #[arg(long, default_value_t = 700)]
    pub dt_max: i64,
    #[arg(long, default_value_t = 20)]
    pub dt_step: i64,

    /// Contour levels; the first one also sets the width of the intervals
    /// used by confidence-aware filtering.
    #[arg(long = "cutoff", default_values_t = vec![0.05])]
    pub cutoffs: Vec<f64>,

    /// Qualification mask reported as `qualified`.
    #[arg(long, value_enum, default_value_t = Filter::Confidence)]
    pub filter: Filter,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Start from the reference experiment and override individual values.
    #[arg(long = "paper-defaults")]
    pub reference_defaults: bool,

    #[arg(long)]
    pub tc0: Option<NaiveDate>,
    #[arg(long)]
    pub m0: Option<f64>,
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub phi0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub a0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,

    /// First sampled date (defaults to 800 days before tc0).
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Last sampled date (defaults to the day before tc0).
    #[arg(long)]
    pub end: Option<NaiveDate>,

    #[arg(long, value_enum, default_value_t = CalendarArg::BusinessDays)]
    pub calendar: CalendarArg,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalendarArg {
    BusinessDays,
    Daily,
}
