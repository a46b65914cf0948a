use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Exact integer arithmetic left its representable range.
    #[error("arithmetic overflow: {0}")]
    Overflow(String),
    /// The caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),
    /// An enumeration or allocation would exceed the configured cap.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// A floating-point computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Prefixes the message with `ctx`; parse errors pass through unchanged.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Overflow(m) => Error::Overflow(format!("{ctx}: {m}")),
            Error::Usage(m) => Error::Usage(format!("{ctx}: {m}")),
            Error::Resource(m) => Error::Resource(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            e @ Error::Parse(_) => e,
        }
    }
}
