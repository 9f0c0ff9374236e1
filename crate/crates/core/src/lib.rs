//! Calibration of the log-periodic power law singularity (LPPLS) model and
//! likelihood inference on its critical time.
//!
//! The crate is organised bottom-up:
//!
//! * [`series`] loads close prices onto a calendar-day axis and cuts windows.
//! * [`model`] evaluates the LPPLS function, its derivatives and the
//!   stylized-feature filters.
//! * [`calibrate`] solves the linear amplitudes exactly and searches the
//!   nonlinear parameters with a multistart simplex.
//! * [`likelihood`] turns cost profiles into profile and modified profile
//!   likelihood curves.
//! * [`intervals`] extracts likelihood intervals and nuisance-parameter
//!   intervals.
//! * [`multiscale`] scans window sizes into a relative likelihood surface.
//! * [`synthetic`] generates LPPLS series with Gaussian noise.

pub mod calibrate;
pub mod intervals;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod multiscale;
pub mod optimize;
pub mod series;
pub mod synthetic;

pub use calibrate::{CalibrationConfig, FitResult, ProfilePoint};
pub use likelihood::{FisherBlocks, LikelihoodCurve};
pub use model::{LinearParams, LpplsParams, NonlinearParams};
pub use multiscale::MultiscaleSurface;
pub use series::{PriceSeries, Window};
