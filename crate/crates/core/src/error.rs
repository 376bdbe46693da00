use std::path::PathBuf;

/// Errors raised across the simulator, planners and tools.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter block or input violated its contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The integrated state became non-finite.
    #[error("simulation diverged at t = {time_s:.3} s")]
    Divergence { time_s: f64 },
    /// Riccati solve failed to meet its residual or stability contract.
    #[error("LQR synthesis failed: {0}")]
    Lqr(String),
    /// Vector length did not match the model dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    /// Configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed grid or model file.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
