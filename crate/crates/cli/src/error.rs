use std::fmt;
use std::io;

/// Process exit codes.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config file, or unusable plot input.
    Usage(String),
    Core(lrdecay::Error),
    Io {
        path: String,
        source: io::Error,
    },
    /// Training diverged; partial outputs were written.
    Diverged(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use lrdecay::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Io { .. } => EXIT_FAILURE,
            CliError::Core(e) => match e {
                E::Io(_) => EXIT_FAILURE,
                _ => EXIT_VALIDATION,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
            CliError::Diverged(m) => write!(f, "diverged: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<lrdecay::Error> for CliError {
    fn from(e: lrdecay::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
