use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Filter design produced an unusable section. Never expected for valid inputs.
    #[error("filter design failed: {0}")]
    Design(String),

    /// Malformed input data or file. `offset` is a byte offset for binary
    /// files and a record index for everything else.
    #[error("ingestion error at {offset}: {message}")]
    Ingestion { offset: u64, message: String },

    /// An operation was called with arguments violating its contract
    /// (shape mismatch, empty input where one is required).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training diverged. `step` counts optimizer steps within the call that failed.
    #[error("training failed at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Metric evaluated outside its domain of definition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn ingestion(offset: u64, message: impl Into<String>) -> Self {
        Error::Ingestion {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn training(step: usize, message: impl Into<String>) -> Self {
        Error::Training {
            step,
            message: message.into(),
        }
    }
}
