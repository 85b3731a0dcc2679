use thiserror::Error;

/// Errors raised anywhere in the threshold-optimization pipeline.
#[derive(Debug, Error)]
pub enum OerError {
    #[error("input is empty")]
    EmptyInput,

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature {feature} is degenerate (constant value {value})")]
    DegenerateFeature { feature: String, value: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("bin {bin} is degenerate: {reason}")]
    DegenerateBin { bin: usize, reason: String },

    #[error("bin {bin} has no samples of either class; the benefit-cost ratio is undefined")]
    UndefinedBin { bin: usize },

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, OerError>;

pub(crate) fn invalid<T>(message: impl Into<String>) -> Result<T> {
    Err(OerError::InvalidArgument(message.into()))
}
