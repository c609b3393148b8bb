use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("divide: zero denominator at ({row}, {col})")]
    DivideByZero { row: usize, col: usize },

    #[error("segment_softmax: segment {0} is empty")]
    EmptySegment(usize),

    #[error("backward: loss must be 1x1, got {0:?}")]
    NotScalar((usize, usize)),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("size cap exceeded: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}
