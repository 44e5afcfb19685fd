use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("topology error at {location}: {message}")]
    Topology { location: String, message: String },

    #[error("performance map holds no knowledge yet")]
    NoKnowledge,

    #[error("invalid utility value {0}")]
    InvalidUtility(f64),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("cannot fit latent representation without samples")]
    EmptyFit,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("policy load error: {0}")]
    PolicyLoad(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn topology(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Topology {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
