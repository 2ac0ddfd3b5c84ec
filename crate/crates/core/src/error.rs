use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("{field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("region enumeration supports at most {max} items, got {got}")]
    Capacity { max: usize, got: usize },

    #[error("rejection sampler gave up after {attempts} draws (degenerate support?)")]
    SamplingExhausted { attempts: usize },

    /// The comparison graph does not connect every item, so the observed
    /// information matrix is singular.
    #[error("observed information is singular: comparison graph is disconnected")]
    Underdetermined,

    /// D(theta) is numerically zero, so the rank of theta cannot be told apart
    /// from a neighbouring rank.
    #[error("rank is indistinguishable: D(theta) = {value:e}")]
    Indistinguishable { value: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
