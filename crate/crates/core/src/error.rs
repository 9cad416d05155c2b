use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("state error: {0}")]
    State(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("degenerate axis: {0}")]
    DegenerateAxis(String),

    #[error("insufficient constituents: need {needed}, found {found}")]
    InsufficientConstituents { needed: usize, found: usize },

    #[error("undefined observable: {0}")]
    UndefinedObservable(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite {what}; offending parameters: {}", params.join(", "))]
    NonFinite { what: String, params: Vec<String> },

    #[error("bad magic bytes in {context}: expected {expected:?}, found {found:?}")]
    BadMagic {
        context: String,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported {context} format version {found} (expected {expected})")]
    Version {
        context: String,
        expected: u8,
        found: u8,
    },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI's error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::DegenerateBatch(_) => "degenerate-batch",
            Error::Lookup(_) => "lookup",
            Error::State(_) => "state",
            Error::IndexOutOfRange(_) => "index",
            Error::DegenerateAxis(_) => "degenerate-axis",
            Error::InsufficientConstituents { .. } => "insufficient-constituents",
            Error::UndefinedObservable(_) => "undefined-observable",
            Error::Empty(_) => "empty",
            Error::Input(_) => "input",
            Error::Config(_) => "config",
            Error::NonFinite { .. } => "non-finite",
            Error::BadMagic { .. } => "format-magic",
            Error::Version { .. } => "format-version",
            Error::Truncated(_) => "format-truncated",
            Error::NotFound(_) => "file-not-found",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
