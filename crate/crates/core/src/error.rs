use thiserror::Error;

pub type Result<T> = std::result::Result<T, TnaError>;

#[derive(Debug, Error)]
pub enum TnaError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// A precondition on the arguments of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The object was used in a state that does not permit the call,
    /// e.g. a second `backward` on the same tape.
    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ingestion failed at line {line}: {message}")]
    Ingest { line: usize, message: String },

    /// Input data admits no meaningful answer (no positives, no room to
    /// sample negatives, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TnaError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        TnaError::Contract(msg.into())
    }

    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        TnaError::Shape { op, left, right }
    }
}
