use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    /// Shot data whose size or content does not match its declared layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unsupported instruction `{instruction}`")]
    Unsupported { line: usize, instruction: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The detector model cannot be turned into a matching graph.
    #[error("unsupported detector model: {0}")]
    UnsupportedModel(String),

    #[error("{defects} defects exceed the exact matcher capacity of {max}")]
    Capacity { defects: usize, max: usize },

    #[error("no perfect matching exists: defect {0} cannot reach a partner or the boundary")]
    NoMatching(usize),

    /// Contract violations in the autodiff engine.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
