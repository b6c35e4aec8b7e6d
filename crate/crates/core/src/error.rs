use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bootstrap replicate {replicate} failed twice: {message}")]
    Bootstrap { replicate: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse failure class, used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } => ErrorKind::Parse,
            Error::InvalidConfig(_) | Error::InvalidGrid(_) | Error::Dimension(_) => {
                ErrorKind::Config
            }
            Error::NonFinite(_)
            | Error::Degenerate(_)
            | Error::Singular(_)
            | Error::Bootstrap { .. } => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Config,
    Numerical,
    Io,
}
