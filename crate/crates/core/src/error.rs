use thiserror::Error;

/// Errors raised by the numerical core and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid noise: {0}")]
    InvalidNoise(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("noise scale must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("observation y = {y} is unreachable (log-normalizer {log_normalizer} below floor)")]
    Unreachable { y: f64, log_normalizer: f64 },
    #[error("{what} diverges for this distribution")]
    DivergentMoment { what: &'static str },
    #[error("estimator is not invertible: {0}")]
    NonInvertible(String),
    #[error("value {x} lies outside the estimator range ({lo}, {hi})")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("slope {slope} of the estimator is below the resolvable floor at y = {y}")]
    SlopeUnderflow { y: f64, slope: f64 },
    #[error("unsupported mode: {0}")]
    Unsupported(String),
    #[error("no small-noise limit prediction covers this prior/noise pair: {0}")]
    NoPrediction(String),
    #[error("root finder failed: {0}")]
    RootFinding(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
