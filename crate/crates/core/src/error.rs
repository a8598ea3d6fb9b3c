use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("frequency ({i}, {j}) out of bounds for {h}x{w}")]
    FrequencyOutOfBounds { i: i64, j: i64, h: usize, w: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle error in batch {batch}: {message}")]
    Oracle { batch: usize, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("non-finite loss at lambda = {lambda}")]
    NonFiniteLoss { lambda: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: msg.into(),
        }
    }
}
