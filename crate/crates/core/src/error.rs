use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input text could not be parsed; carries the source name and 1-based line
    /// (or element ordinal for XML input).
    #[error("{input}:{line}: {msg}")]
    Parse {
        input: String,
        line: usize,
        msg: String,
    },

    /// Structurally invalid graph (self-loop, duplicate edge, bad capacity, ...).
    #[error("invalid topology: {0}")]
    Topology(String),

    /// Pruning removed every node.
    #[error("topology degenerates: no node survives degree-one pruning")]
    Degenerate,

    /// Mismatched dimensions between cooperating structures.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Demand pairs that have traffic but no usable path in the current view.
    #[error("no usable path for demand pair(s): {0:?}")]
    NoUsablePath(Vec<(usize, usize)>),

    /// A numeric routine failed to produce a certified result.
    #[error("solver failure: {0}")]
    Unsolvable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(input: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            input: input.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
