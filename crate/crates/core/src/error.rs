use std::path::PathBuf;

/// Errors raised anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A precondition of the operation does not hold (CFL, smallness, resolution).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A quadrature, fixed-point iteration or time march failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The operation is not available in the requested spatial dimension.
    #[error("unsupported dimension {dim}: {what}")]
    UnsupportedDimension { dim: usize, what: String },

    /// A configuration entry is missing or malformed.
    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// Unknown experiment suite or bad command usage.
    #[error("usage: {0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
