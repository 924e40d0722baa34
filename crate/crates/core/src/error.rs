use thiserror::Error;

/// Errors raised across the toolkit. The variant tells the caller which
/// layer rejected the input.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("numerics error: {0}")]
    Numerics(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Validation-type errors (bad input) as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Solver(_) | Error::Numerics(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
