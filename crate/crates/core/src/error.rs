use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error. The variants map onto the CLI exit-code classes
/// (configuration, data, statistics), see [`Error::class`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: expected {expected} columns, found {found}")]
    ColumnCount {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{0}: no rows survive the quality filters")]
    EmptyDay(PathBuf),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("timestamp {t} is past the last snapshot ({last})")]
    BeyondDayEnd { t: u64, last: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid order: {0}")]
    Order(String),

    #[error("episode: {0}")]
    Episode(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("protocol: {0}")]
    Protocol(String),
}

/// Coarse failure class used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Stats,
    Other,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::ColumnCount { .. }
            | Error::EmptyDay(_)
            | Error::Data(_)
            | Error::BeyondDayEnd { .. } => ErrorClass::Data,
            Error::Stats(_) => ErrorClass::Stats,
            Error::Order(_) | Error::Episode(_) | Error::Protocol(_) => ErrorClass::Other,
        }
    }
}
