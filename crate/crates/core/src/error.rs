use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-binary mask: {0}")]
    NonBinary(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tumor image {image} has no mask (expected {expected})")]
    MissingMask { image: PathBuf, expected: PathBuf },

    #[error("cannot read image {path}: {message}")]
    UnreadableImage { path: PathBuf, message: String },

    #[error("unknown class directory {0}")]
    UnknownClass(PathBuf),

    #[error("dataset layout error: {0}")]
    Layout(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("line {line}: {message}")]
    Table { line: usize, message: String },

    #[error("no evaluable samples for class {0}")]
    EmptyClass(String),

    #[error("no weight given for class {0}")]
    MissingWeight(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad inputs (configuration, files, shapes)
    /// rather than a failure while computing.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Numeric(_) | Error::Io { .. } | Error::Checkpoint(_))
    }
}
