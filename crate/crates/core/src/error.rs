use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The parameter is not identified by the requested estimating function
    /// or the variance formula degenerates (zero denominator).
    #[error("not identified: {0}")]
    NotIdentified(String),

    /// A local inverse of a centering function has no bracket near the
    /// requested point.
    #[error("centering function is not invertible near {center}")]
    NotInvertibleHere { center: f64 },

    /// A Monte Carlo centering was too noisy to be used inside a root search.
    #[error("centering error estimate {error:.3e} exceeds threshold {threshold:.3e}")]
    CenteringTooNoisy { error: f64, threshold: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
