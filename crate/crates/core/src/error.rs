use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument or configuration value.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trace too short: need at least {needed} slots, got {actual}")]
    TraceTooShort { needed: usize, actual: usize },

    #[error("{path}:{line}: cannot parse {token:?}: {reason}")]
    Parse {
        path: String,
        line: usize,
        token: String,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("horizon {horizon} is outside the trained range [1, {max}]")]
    HorizonOutOfRange { horizon: usize, max: usize },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 usage/config, 3 data, 4 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::HorizonOutOfRange { .. } => 2,
            Error::Diverged { .. } => 4,
            _ => 3,
        }
    }

    /// Short machine-readable tag for JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::TraceTooShort { .. } => "trace_too_short",
            Error::Parse { .. } => "parse",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::HorizonOutOfRange { .. } => "horizon_out_of_range",
            Error::Diverged { .. } => "diverged",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }
}
