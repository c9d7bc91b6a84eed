use thiserror::Error;

/// Errors produced by the hashing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sample id {id} out of range (n = {n})")]
    IdOutOfRange { id: usize, n: usize },

    #[error("index {index} out of range (len = {len})")]
    Index { index: usize, len: usize },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("state error: {0}")]
    State(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
