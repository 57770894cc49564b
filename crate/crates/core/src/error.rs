use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("parameter set does not match layer specs: {0}")]
    ParamMismatch(String),

    #[error("loss/head mismatch: {0}")]
    LossHead(String),

    #[error("forward trace does not match model: {0}")]
    TraceMismatch(String),

    #[error("client {client_id} has no retained trace for batch {batch_id}")]
    UnknownBatch { client_id: u32, batch_id: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Data(String),

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("receive timed out")]
    Timeout,

    #[error("peer closed the connection")]
    PeerClosed,

    #[error("connection poisoned by an earlier protocol error")]
    Poisoned,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
