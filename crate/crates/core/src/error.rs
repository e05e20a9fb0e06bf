use thiserror::Error;

use crate::num::Checkpoint;

/// Errors raised anywhere in the pipeline.
///
/// Variants map onto CLI exit codes: usage problems exit 1, data problems
/// exit 2 and numeric failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Training produced a non-finite loss; carries the parameters of the
    /// best epoch seen before that point.
    #[error("numeric failure: gradient blow-up, loss not finite at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<Checkpoint>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Numeric(_) | Error::Diverged { .. } => 3,
            Error::Data(_) | Error::Config(_) | Error::Io(_) | Error::Json(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
