use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("quadrature did not converge ({context}): estimate {estimate:e}, error {error:e}")]
    Quadrature { context: String, estimate: f64, error: f64 },

    #[error("chain validation failed: {0}")]
    Validation(String),

    #[error("unsupported for this chain: {0}")]
    Unsupported(String),

    #[error("horizon {0} exceeds the supported maximum")]
    Horizon(u64),

    #[error("sampler diagnostic: {0}")]
    Sampler(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("empty or invalid sample: {0}")]
    Sample(String),

    #[error("path does not belong to the kernel's chain: {0}")]
    Mismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    File { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
