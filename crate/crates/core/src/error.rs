use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure classes; the CLI maps them onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Teacher,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("sample {sample_id}: expected {expected} features, found {found}")]
    FeatureLength {
        sample_id: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown class name {0:?}")]
    UnknownClass(String),

    #[error("task {0} is not listed in the manifest")]
    MissingTask(usize),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("token {token:?} is not in the vocabulary (label {label:?})")]
    OutOfVocabulary { label: String, token: String },

    #[error("label {label:?} needs {needed} tokens, limit is {limit}")]
    LabelTooLong { label: String, needed: usize, limit: usize },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("teacher: {0}")]
    Teacher(#[from] TeacherError),
}

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("request to {endpoint} timed out after {attempts} attempt(s)")]
    Timeout { endpoint: String, attempts: u32 },

    #[error("transport failure talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    #[error("malformed teacher response: {0}")]
    Malformed(String),

    #[error("teacher dimension mismatch: {0}")]
    Dimension(String),

    #[error("fixture has no record for sample {0:?}")]
    MissingSample(String),

    #[error("bad fixture file: {0}")]
    Fixture(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Infeasible(_) => ErrorCategory::Config,
            Error::Io { .. }
            | Error::Malformed { .. }
            | Error::FeatureLength { .. }
            | Error::UnknownClass(_)
            | Error::MissingTask(_)
            | Error::Dimension(_)
            | Error::OutOfVocabulary { .. }
            | Error::LabelTooLong { .. }
            | Error::Checkpoint(_) => ErrorCategory::Data,
            Error::Teacher(_) => ErrorCategory::Teacher,
            Error::NonFinite(_) => ErrorCategory::Numeric,
        }
    }
}
