use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("replica count {n} outside supported range 1..={max}")]
    ReplicaCountOutOfRange { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no stationary limit: {0}")]
    NoStationaryLimit(String),

    #[error("norm drift {drift:e} exceeds bound {bound:e}")]
    NormDrift { drift: f64, bound: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sample set too small: {got} < {min}")]
    SampleTooSmall { got: usize, min: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
