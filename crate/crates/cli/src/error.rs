use std::fmt;
use std::path::Path;

use seqrank_core::Error;

/// Error with a process exit code attached.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or parameters.
    Validation(String),
    /// Numerical failure during a run.
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn validation(field: &str, message: impl fmt::Display) -> Self {
        CliError::Validation(format!("{field}: {message}"))
    }

    /// Wraps a core error, prefixing configuration field paths with `path`.
    pub fn nested(path: &str, err: Error) -> Self {
        match err {
            Error::InvalidConfig { field, message } => {
                CliError::Validation(format!("{path}.{field}: {message}"))
            }
            other => CliError::from(other),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let text = err.to_string();
        match err {
            Error::InvalidParams(_)
            | Error::InvalidSupport(_)
            | Error::InvalidConfig { .. }
            | Error::Capacity { .. } => CliError::Validation(text),
            Error::SamplingExhausted { .. } | Error::Underdetermined | Error::Indistinguishable { .. } => {
                CliError::Runtime(text)
            }
            Error::Io { .. } => CliError::Io(text),
        }
    }
}
