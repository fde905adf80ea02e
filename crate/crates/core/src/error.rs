use std::path::PathBuf;

/// Errors raised anywhere in the evaluation and training pipeline.
///
/// Variants are grouped so that a front-end can map them onto distinct exit
/// codes: input problems, empty comparison sets, resolution limits and
/// training divergence.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Format { context: String, message: String },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("labels required: {0}")]
    LabelsRequired(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("empty comparison set: {0}")]
    EmptyComparison(String),

    #[error("target below resolution: {0}")]
    BelowResolution(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: {message}")]
    Divergence { step: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn row(row: usize, message: impl Into<String>) -> Self {
        Error::Row {
            row,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
