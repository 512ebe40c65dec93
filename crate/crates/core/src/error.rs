use thiserror::Error;

/// Errors produced by the inference library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A table that should be a probability mass function has no positive
    /// mass, a negative entry, or a zero normalizer.
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),

    /// A dense table would exceed the configured size cap.
    #[error("capacity exceeded for {what}: {size} > cap {cap}")]
    Capacity {
        what: String,
        size: u128,
        cap: u128,
    },

    /// The EM sufficient statistics cannot determine a parameter.
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateDistribution(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
