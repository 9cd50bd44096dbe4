use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter `{name}` = {value} out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("coordinate {index} has sample variance {variance:e} below the floor {floor:e}")]
    DegenerateCoordinate {
        index: usize,
        variance: f64,
        floor: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("band width selection failed: {0}")]
    BandSelection(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::OutOfRange {
            name,
            value,
            expected,
        }
    }

    /// Replaces the placeholder path of I/O and CSV errors.
    pub fn with_path(self, path: &std::path::Path) -> Self {
        match self {
            Error::Io { source, .. } => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            Error::Csv { source, .. } => Error::Csv {
                path: path.to_path_buf(),
                source,
            },
            Error::Json(e) => Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
            other => other,
        }
    }
}
