use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("Choi matrix has eigenvalue {0:e}; the map is not completely positive")]
    NotCompletelyPositive(f64),

    #[error("matrix is not an isometry (defect {0:e})")]
    NotIsometry(f64),

    #[error("retraction failed: X + Z is rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),

    #[error("cost {0:e} is too small for the gradient of the unsquared norm")]
    DegenerateCost(f64),

    #[error("superoperator side {side} exceeds the memory cap of {cap}")]
    MemoryCap { side: usize, cap: usize },

    #[error("Hessian dimension {dof} exceeds the cap of {cap}")]
    HessianCap { dof: usize, cap: usize },

    #[error("linear solve failed in {0}")]
    Singular(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
