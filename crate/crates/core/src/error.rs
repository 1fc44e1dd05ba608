use thiserror::Error;

/// Errors raised by the basis, transform and operator layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("position {position} out of range 1..={max} at level {level}")]
    IndexOutOfRange { level: u32, position: u32, max: u32 },
    #[error("level {level} below the coarsest admissible level {min}")]
    LevelTooCoarse { level: u32, min: u32 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unsupported dimension {0} (expected 1, 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("operator diagonal has a non-positive entry at {0}")]
    ZeroDiagonal(usize),
    #[error("breakpoints must be strictly increasing with one piece per interval")]
    MalformedPolynomial,
}

pub type Result<T, E = WaveletError> = std::result::Result<T, E>;
