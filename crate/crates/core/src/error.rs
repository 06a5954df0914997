use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not decodable: received {received} distinct codewords, need {needed}")]
    NotDecodable { received: usize, needed: usize },

    #[error("missing gradient for mini-batch {0}")]
    MissingBatch(usize),

    #[error("conflict for worker {worker} (cluster {cluster} open) cannot be resolved by a swap")]
    NoResolution { worker: usize, cluster: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
