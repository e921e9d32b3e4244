//! Crate-wide error type.

use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum Error {
    /// Two vectors that must have equal length do not.
    DimensionMismatch { expected: usize, found: usize },
    /// A candidate set (SOM nodes, policy library, input set) is empty.
    EmptyCandidates(&'static str),
    /// A vector contains a NaN or infinite entry, or is empty.
    InvalidVector(&'static str),
    /// A parameter failed validation.
    InvalidParameter(String),
    /// A task id is not registered in the environment.
    UnknownTask(String),
    /// The analytic error bound is undefined (no nodes added).
    UndefinedBound,
    Io { path: PathBuf, source: std::io::Error },
    /// A persisted or configured file failed to parse or validate.
    Format { path: PathBuf, detail: String },
    UnsupportedVersion { path: PathBuf, found: u64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::EmptyCandidates(what) => write!(f, "empty candidate set: {what}"),
            Error::InvalidVector(why) => write!(f, "invalid vector: {why}"),
            Error::InvalidParameter(why) => write!(f, "invalid parameter: {why}"),
            Error::UnknownTask(id) => write!(f, "unknown task id: {id:?}"),
            Error::UndefinedBound => {
                write!(f, "permissible error bound undefined: no nodes added")
            }
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Format { path, detail } => write!(f, "{}: {detail}", path.display()),
            Error::UnsupportedVersion { path, found } => {
                write!(f, "{}: unsupported format_version {found}", path.display())
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
