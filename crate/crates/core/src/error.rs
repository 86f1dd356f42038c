use thiserror::Error;

/// Errors produced by the solver and its supporting types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("input contains a negative or non-finite value at index {index}")]
    NonFiniteInput { index: usize },

    #[error("weight at index {index} is zero after normalization")]
    ZeroWeight { index: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cost entry {index} is negative or non-finite ({value})")]
    NegativeOrNonFiniteEntry { index: usize, value: f64 },

    #[error("reduction over an empty view")]
    EmptyView,

    #[error("every entry of the reduced view is -inf")]
    AllNegativeInfinity,

    #[error("non-finite value produced by {0}")]
    NonFiniteResult(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("row {row} of the transport plan carries no mass")]
    ZeroRowMass { row: usize },

    #[error("solver reported a numerical failure")]
    NumericalFailure,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
