use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid stability index: {0}")]
    InvalidIndex(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge at r = {radius}: {detail}")]
    Quadrature { radius: f64, detail: String },

    #[error("bridge rejection stalled at interior point {index}: acceptance rate {rate:.3e} below floor {floor:.3e}")]
    RejectionStall { index: usize, rate: f64, floor: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
