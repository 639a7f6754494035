use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code contract:
/// usage/config problems exit 1, data/file problems exit 2, numeric
/// failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("state error: {0}")]
    State(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("corruption error at byte {offset}: {msg}")]
    Corruption { offset: u64, msg: String },
    #[error("incompatibility error: {0}")]
    Incompatibility(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code for the CLI: 0 success, 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Parameter(_) | Error::Dimension(_) => 1,
            Error::Format(_)
            | Error::Corruption { .. }
            | Error::Incompatibility(_)
            | Error::Data(_)
            | Error::Io(_) => 2,
            Error::Numeric(_) | Error::State(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
