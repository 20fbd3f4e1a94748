use thiserror::Error;

/// Errors raised by the library. The command-line front end maps these to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("SNP {column} stayed monomorphic after {attempts} resampling attempts")]
    Monomorphic { column: usize, attempts: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("case {case} requires parameters: {}", missing.join(", "))]
    MissingParameter { case: &'static str, missing: Vec<&'static str> },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("too many failed replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// True for problems with the caller's request rather than with the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::MissingParameter { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
