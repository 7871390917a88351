use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("labels are required for {0}")]
    MissingLabels(&'static str),

    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),

    #[error("degenerate embeddings: all singular values are zero")]
    DegenerateEmbedding,

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("invalid config `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("aggregation over an empty set of updates")]
    EmptyAggregation,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}
