use std::path::PathBuf;

use crate::volume::GridShape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {found:?}: {reason}")]
    BadMagic { found: [u8; 4], reason: &'static str },

    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("truncated file: need {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("declared dims need {expected} payload bytes but file holds {found}")]
    PayloadLength { expected: usize, found: usize },

    #[error("non-finite voxel value at index {index}")]
    NonFinite { index: usize },

    #[error("value {value} at index {index} cannot be stored as {encoding}")]
    Range {
        value: f64,
        index: usize,
        encoding: &'static str,
    },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: GridShape, found: GridShape },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("no voxel above threshold {threshold}")]
    NoForeground { threshold: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("case {id}: missing {field}")]
    MissingField { id: String, field: &'static str },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("generation failed: {0}")]
    Generation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
