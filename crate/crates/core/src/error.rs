use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants map onto process exit codes through [`Error::exit_code`], which the
/// command-line front end uses verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value {value} outside the domain [0, 1] ({context})")]
    Domain { value: f64, context: String },

    #[error("numerical failure on a {rows}x{cols} matrix: {reason}")]
    Numerical { rows: usize, cols: usize, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }

    /// Process exit code: 2 format, 3 capacity, 4 contract violation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format { .. } | Error::Version { .. } | Error::Checksum { .. } => 2,
            Error::Capacity(_) => 3,
            Error::Contract(_) => 4,
            _ => 1,
        }
    }
}
