use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported model/preference combination: {0}")]
    Unsupported(String),

    #[error("outside utility domain: {0}")]
    Domain(String),

    #[error("unknown series identifier `{0}`")]
    UnknownSeries(String),

    #[error("band parametrization mismatch: expected {expected}, got {got}")]
    Parametrization { expected: &'static str, got: &'static str },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
