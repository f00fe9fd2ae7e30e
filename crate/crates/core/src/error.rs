use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no simulations")]
    NoSimulations,
    #[error("population extinct")]
    Extinct,
    #[error("weights are not normalized (sum = {0})")]
    Unnormalized(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid configuration value for `{key}`: {reason}")]
    Config { key: &'static str, reason: String },
    #[error("fewer than two distinct parameter vectors and no earlier covariance to fall back on")]
    NoCovariance,
    #[error("tolerance must be positive")]
    NonPositiveTolerance,
    #[error("prior produces degenerate simulations: {0}")]
    DegeneratePilot(String),
    #[error("invalid simulation schedule: {0}")]
    Schedule(String),
    #[error("invalid observation: {0}")]
    Observation(String),
}

impl Error {
    pub(crate) fn config(key: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            key,
            reason: reason.into(),
        }
    }
}
