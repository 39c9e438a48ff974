use thiserror::Error;

/// Errors raised by the geometry, solvers and problem generators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("Gram matrix is numerically singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularBase { min_eigenvalue: f64 },

    #[error("point is outside the safe region: ||X^T X - I||_F = {feas:e} > eps = {eps}")]
    NotInSafeRegion { feas: f64, eps: f64 },

    #[error("iteration limit of {iterations} reached (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("data has rank {rank}, cannot keep {keep} components")]
    RankDeficient { rank: usize, keep: usize },

    #[error("malformed matrix container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
