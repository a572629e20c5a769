use std::path::PathBuf;

/// Errors raised across the crate.
///
/// Every variant maps onto one of the process exit codes used by the
/// `armtune` binary (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's contract (bad dimensions, stepping a
    /// finished episode, too few trials, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// An input lies outside the domain of the operation, e.g. a joint angle
    /// outside its limits.
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite value appeared during training or optimization.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A configuration or data file could not be parsed or failed validation.
    #[error("invalid `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage, 3 numeric failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Domain(_) | Error::Parse { .. } => 2,
            Error::Numeric(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}
