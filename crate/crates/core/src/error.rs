use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("out-of-order sample: expected origin {expected}, got {got}")]
    Sequence { expected: usize, got: usize },

    #[error(
        "information leakage: label of origin {origin} ends at index {label_end}, \
         but only indices up to {observed_end} are observed"
    )]
    Leakage {
        origin: usize,
        label_end: usize,
        observed_end: usize,
    },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
