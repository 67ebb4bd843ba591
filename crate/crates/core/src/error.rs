use thiserror::Error;

/// Errors produced across mesh generation, assembly and the hierarchical
/// matrix algorithms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular (pivot {pivot:e} at index {index})")]
    Singular { index: usize, pivot: f64 },

    #[error("matrix is not symmetric positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("non-finite entry in matrix")]
    NonFinite,

    #[error("problem too large for desk budget: {dofs} degrees of freedom exceed {limit}")]
    Budget { dofs: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
