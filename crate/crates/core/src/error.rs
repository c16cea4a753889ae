use thiserror::Error;

/// Errors surfaced by the recovery library.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed us something malformed (dimensions, ranges, non-finite data).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A numerical routine could not produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Configuration file problems; carries every violated field at once.
    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
