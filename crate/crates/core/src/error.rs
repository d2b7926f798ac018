use std::path::PathBuf;

use thiserror::Error;

/// What went wrong while decoding one of the binary file formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    CorruptHeader(String),
    DimensionMismatch { expected: usize, found: usize },
    Truncated { needed: usize, available: usize },
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseErrorKind::CorruptHeader(why) => write!(f, "corrupt header: {why}"),
            ParseErrorKind::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            ParseErrorKind::Truncated { needed, available } => {
                write!(
                    f,
                    "truncated record: needed {needed} bytes, {available} available"
                )
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at byte {offset}: {kind}")]
    Parse { offset: usize, kind: ParseErrorKind },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: usize, kind: ParseErrorKind) -> Self {
        Error::Parse { offset, kind }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
