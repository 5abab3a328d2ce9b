use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input failed validation; `field` names the offending parameter.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    /// The request is well formed but exceeds a hard limit of the method.
    #[error("refused: {0}")]
    Refused(String),

    /// Malformed model or embellishment description.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        field,
        reason: reason.into(),
    }
}
