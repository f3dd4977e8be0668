use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the pipeline.
///
/// The variants follow the error classes the command line maps to exit
/// codes: configuration, ingestion and training failures, plus the
/// shape/contract errors raised by the tensor engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("corrupt file {path}: {reason}")]
    Corruption { path: String, reason: String },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("training failure: {0}")]
    Training(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit status: 2 configuration, 3 ingestion, 4 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension(_) | Error::Split(_) => 2,
            Error::Ingestion(_) | Error::Corruption { .. } | Error::Io(_) | Error::Input(_) | Error::Alignment(_) => 3,
            Error::Training(_) | Error::DegenerateBatch(_) | Error::Contract(_) => 4,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn corrupt(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Corruption {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
