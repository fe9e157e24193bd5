use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    Data(String),
    #[error("empty tail label set; skip re-weighting")]
    EmptyTail,
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    /// Short machine-readable tag used as the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv { .. } => "csv",
            Error::Checkpoint(_) => "checkpoint",
            Error::MissingGradient(_) => "gradient",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::EmptyTail => "tail",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
