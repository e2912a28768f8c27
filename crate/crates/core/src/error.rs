use thiserror::Error;

use crate::solver::RunTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("objective is not strongly convex: {0}")]
    StrongConvexity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value at iteration {k}: {what}")]
    NonFinite { k: usize, what: String },

    /// A run hit a non-finite iterate. The trace holds every record up to and
    /// including the last finite state.
    #[error("run diverged at iteration {k}")]
    Diverged { k: usize, partial: Box<RunTrace> },

    #[error("singular or ill-conditioned system (condition {condition:.3e})")]
    Singular { condition: f64 },

    #[error("premise violated: {0}")]
    Premise(String),

    #[error("insufficient data: {usable} usable points, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
