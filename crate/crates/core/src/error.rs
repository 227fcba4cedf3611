use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid form: {0}")]
    InvalidForm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("budget exceeded: estimated {needed} nodes, budget {budget}")]
    BudgetExceeded { needed: f64, budget: u64 },

    #[error("minor arc sample is empty for X={x}, Q={q}")]
    EmptyMinorArcs { x: u64, q: f64 },

    #[error("singular series routes disagree at q={q}: direct {direct}, dual {dual}")]
    DualRouteMismatch { q: u64, direct: f64, dual: f64 },

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("system json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
