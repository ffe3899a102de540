use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An index (token position, layer, head) fell outside its valid range.
    #[error("index out of bounds: {0}")]
    Bounds(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller-supplied argument violates the operation's contract.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Model construction or checkpoint loading failed.
    #[error("model load error: {0}")]
    Load(String),

    /// A prompt plus its generation budget does not fit in the model context.
    #[error("context capacity exceeded: {needed} positions needed, model holds {capacity}")]
    Capacity { needed: usize, capacity: usize },

    /// The embedding provider has no vector for a text.
    #[error("embedding lookup failed: {0}")]
    Lookup(String),

    /// Offsets, spans or rendered fields disagree with each other.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A malformed record in a line-delimited input file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
