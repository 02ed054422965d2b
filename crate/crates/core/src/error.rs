use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration references something that does not exist or is malformed.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-supplied input breaks an operation precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A scaling target falls outside the service's scaling requirements.
    #[error("bound violation on service `{service}`: {detail}")]
    BoundViolation { service: String, detail: String },

    /// A metric sample does not fit the store schema.
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
