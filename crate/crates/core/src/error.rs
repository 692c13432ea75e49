use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} time steps, got {got}")]
    TooFewSteps { needed: usize, got: usize },

    #[error("degenerate input: all values are identical")]
    Degenerate,

    #[error("fixed-point iteration did not converge after {iterations} iterations (last increment {increment:e})")]
    NoConvergence { iterations: usize, increment: f64 },

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
