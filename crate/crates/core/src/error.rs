use thiserror::Error;

/// Errors raised while building or analysing a body reservoir.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrgError {
    #[error("reservoir construction failed: {0}")]
    Construction(String),

    #[error("eigenvalue iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    SpectralNonConvergence { iterations: usize, last_estimate: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("round {t} is beyond the opponent schedule (length {len})")]
    ScheduleOutOfRange { t: usize, len: usize },

    #[error("invalid schedule program: {0}")]
    ScheduleParse(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample too small: need more than {k} points, got {n}")]
    SampleTooSmall { k: usize, n: usize },

    #[error("covariance is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },
}

pub type Result<T> = std::result::Result<T, BrgError>;
