use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("support function is unbounded in direction {0:?}")]
    UnboundedSupport(Vec<f64>),

    #[error("polytope is empty")]
    EmptySet,

    #[error("set has zero Lebesgue measure")]
    ZeroMeasure,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("covariance is singular (rank {rank} < {dim}); use the degenerate path")]
    SingularCovariance { rank: usize, dim: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no interior point: occupancy {value} does not exceed threshold {alpha}")]
    NoInterior { value: f64, alpha: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dim(expected: usize, got: usize, context: &'static str) -> Self {
        Error::DimensionMismatch {
            expected,
            got,
            context,
        }
    }
}
