use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("model unavailable: {0}")]
    ModelUnavailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid bit prefix: no probability mass below prefix {0}")]
    InvalidPrefix(String),

    #[error("impossible sample: chosen branch has probability zero")]
    ImpossibleSample,

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}
