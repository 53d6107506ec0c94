use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("metric input: {0}")]
    MetricInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("training diverged at stage {stage}, epoch {epoch}: loss {loss}")]
    Diverged { stage: usize, epoch: usize, loss: f64 },
    #[error("format version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("truncated or malformed file: {0}")]
    Truncated(String),
    #[error("checksum failure: {0}")]
    Checksum(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FieldError>;
