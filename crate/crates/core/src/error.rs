use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A persisted file could not be decoded.
    #[error("format error in {field}: {reason}")]
    Format { field: String, reason: String },

    /// A configuration file or override was rejected. `line` is 0 for
    /// cross-field validation failures and environment overrides.
    #[error("config error for `{key}` (line {line}): {reason}")]
    Config {
        key: String,
        line: usize,
        reason: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn format_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Format {
        field: field.into(),
        reason: reason.into(),
    }
}
