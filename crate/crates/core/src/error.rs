use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("support violation at state {state}, action {action}: {detail}")]
    SupportViolation {
        state: usize,
        action: usize,
        detail: String,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("linear solve failed: residual {residual:e} exceeds tolerance")]
    SolveFailed { residual: f64 },

    #[error("infeasible program: {0}")]
    Infeasible(String),

    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
