use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("trajectory exhausted at pulse {pulse_index}; device needs reinitialization")]
    NeedsReinit { pulse_index: usize },

    #[error("endurance budget of {budget} lifetime pulses exceeded")]
    EnduranceExceeded { budget: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Param(_) | Error::Config(_) => ErrorKind::Config,
            Error::Parse { .. } | Error::Format(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => ErrorKind::Data,
            Error::NeedsReinit { .. } | Error::EnduranceExceeded { .. } | Error::Shape(_) => ErrorKind::Runtime,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
