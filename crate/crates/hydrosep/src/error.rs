use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] hydrosep_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 usage, 3 missing or empty input, 4 shape or
    /// schema mismatch, 5 numeric failure.
    pub fn exit_code(&self) -> u8 {
        use hydrosep_core::Error as C;
        match self {
            Error::Usage(_) => 2,
            Error::Missing(_) | Error::Io { .. } => 3,
            Error::Parse { .. } | Error::Schema { .. } => 4,
            Error::Core(e) => match e {
                C::InvalidParameter { .. } | C::BudgetExceeded { .. } => 2,
                C::EmptyInput(_) | C::EmptyPool(_) | C::UnknownDevice(_) => 3,
                C::ShapeMismatch { .. } | C::InvalidEvent(_) => 4,
                C::ZeroDenominator(_) | C::Numeric(_) => 5,
            },
        }
    }
}
