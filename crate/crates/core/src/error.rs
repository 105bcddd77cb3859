use thiserror::Error;

/// Errors raised across the simulator, learner and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: MU and GBS share a horizontal position")]
    DegenerateGeometry,

    #[error("action index {index} out of range for {sectors} sector(s) (limit {limit})")]
    IndexOutOfRange {
        index: usize,
        sectors: usize,
        limit: usize,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient data: buffer holds {have}, need {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
