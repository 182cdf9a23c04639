use thiserror::Error;

use crate::weights_io::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch on axis `{axis}`: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: expected a rank-{expected} tensor, got rank {got}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: {what} = {value} is not divisible by {divisor}")]
    NotDivisible {
        op: &'static str,
        what: &'static str,
        value: usize,
        divisor: usize,
    },

    #[error("shape {shape:?} holds {expected} elements but the buffer has {got}")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("theta = {theta} is within {delta:e} rad of a bilinear seam of cell {cell}")]
    NearSeam { theta: f64, delta: f64, cell: usize },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error(transparent)]
    Format(#[from] FormatError),
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}
