use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scalar law was evaluated outside its domain (e.g. log pressure at vacuum).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The explicit update produced a negative density or a non-finite value.
    #[error("stability error at t={t:.6e} (step {step}): {reason}")]
    Stability { t: f64, step: usize, reason: String },

    #[error("maximum number of steps ({max_steps}) exceeded at t={t:.6e}")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
