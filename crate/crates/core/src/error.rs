use thiserror::Error;

/// Errors raised across the library.
///
/// The variants are grouped by class so that the command-line front end can
/// map each class onto its own exit status.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The scaling exponent must make the step sizes summable.
    #[error("rate condition violated: k must exceed 1 (got {0})")]
    RateCondition(f64),

    #[error("capacity exceeded: {what} needs about {needed} items, cap is {cap}")]
    Capacity {
        what: &'static str,
        needed: f64,
        cap: f64,
    },

    #[error("step budget exhausted after {0} steps")]
    Budget(u64),

    #[error("time {t} outside [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
