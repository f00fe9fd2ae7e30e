use std::path::Path;

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or missing configuration. Exit code 1.
    #[error("config error: {0}")]
    Config(String),
    /// Anything that went wrong while running. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {err}", path.display()))
    }

    pub(crate) fn missing(key: &str) -> Self {
        CliError::Config(format!("missing key `{key}`"))
    }

    pub(crate) fn invalid(key: &str, reason: impl std::fmt::Display) -> Self {
        CliError::Config(format!("key `{key}`: {reason}"))
    }
}

impl From<dasmc_core::Error> for CliError {
    fn from(err: dasmc_core::Error) -> Self {
        use dasmc_core::Error;
        match err {
            Error::Config { key, reason } => CliError::invalid(key, reason),
            Error::Observation(msg) => CliError::Config(format!("observations: {msg}")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
