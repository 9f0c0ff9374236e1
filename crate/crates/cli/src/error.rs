use lppls::calibrate::CalibrateError;
use lppls::intervals::IntervalError;
use lppls::likelihood::LikelihoodError;
use lppls::multiscale::MultiscaleError;
use lppls::series::SeriesError;
use lppls::synthetic::GeneratorError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const CONVERGENCE: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Convergence(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data(_) => exit::DATA,
            CliError::Convergence(_) => exit::CONVERGENCE,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        match e {
            // an unreadable input path is a mistake on the command line
            SeriesError::Io { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CalibrateError> for CliError {
    fn from(e: CalibrateError) -> Self {
        match e {
            CalibrateError::EmptyGrid => CliError::Usage(e.to_string()),
            CalibrateError::NoValidPoint => CliError::Convergence(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LikelihoodError> for CliError {
    fn from(e: LikelihoodError) -> Self {
        match e {
            LikelihoodError::AllFlagged => CliError::Convergence(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<IntervalError> for CliError {
    fn from(e: IntervalError) -> Self {
        match e {
            IntervalError::InvalidCutoff(_) | IntervalError::WrongParameter(_) => {
                CliError::Usage(e.to_string())
            }
            IntervalError::Likelihood(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MultiscaleError> for CliError {
    fn from(e: MultiscaleError) -> Self {
        match e {
            MultiscaleError::MissingIntervals { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Series(inner) => CliError::Data(inner.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("cannot write output: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(format!("cannot write output: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("cannot serialize output: {e}"))
    }
}
