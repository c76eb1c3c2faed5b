use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("point outside the unit box at coordinate {index} (value {value})")]
    Domain { index: usize, value: f64 },

    #[error("unsupported objective variant: {0}")]
    UnsupportedVariant(String),

    #[error("payoff {value} exceeds cap {cap} at coordinate {index}")]
    PayoffCap { index: usize, value: f64, cap: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration guard exceeded: {combinations} combinations (limit {limit})")]
    GuardExceeded { combinations: f64, limit: f64 },

    #[error("malformed instance: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
