use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state violates the graph constraint at pair ({0}, {1})")]
    ConstraintViolation(usize, usize),

    #[error("improper refitted posterior: graph degree {degree} is not below n = {n}")]
    ImproperPosterior { degree: usize, n: usize },

    #[error("numerically singular system (condition estimate {condition:.3e})")]
    NumericallySingular { condition: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("oracle degenerate: {0}")]
    OracleDegenerate(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ImproperPosterior { .. }
                | Error::NumericallySingular { .. }
                | Error::NotPositiveDefinite
                | Error::OracleDegenerate(_)
                | Error::Internal(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
