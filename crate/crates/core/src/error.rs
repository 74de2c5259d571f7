//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VvpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Randomized sign-set construction exhausted its restart budget.
    #[error(
        "sign-set construction failed after {restarts} restarts: \
         best certificate {best_certificate} exceeds threshold {tau}"
    )]
    SignSetConstruction {
        restarts: usize,
        best_certificate: f64,
        tau: f64,
    },

    #[error("instance too large: {0}")]
    TooLarge(String),

    /// A numerically checked inequality from the upper-bound machinery failed.
    #[error("bound check failed: estimate {value} exceeds bound {bound} + 3×{standard_error}")]
    BoundCheckFailed {
        value: f64,
        bound: f64,
        standard_error: f64,
    },

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, VvpError>;
