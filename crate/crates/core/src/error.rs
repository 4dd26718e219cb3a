use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("malformed CSV {path}: {reason}")]
    MalformedCsv { path: PathBuf, reason: String },

    #[error("subject {subject}: invariant violated: {check}")]
    InvariantViolation { subject: String, check: String },

    #[error("subject {0} has no annotations")]
    NoAnnotations(String),

    #[error("subjects without annotations: {0:?}")]
    MissingAnnotations(Vec<String>),

    #[error("database too small: need {needed} subjects, have {available}")]
    DatabaseTooSmall { needed: usize, available: usize },

    #[error("unknown subject id {0:?}")]
    UnknownSubject(String),

    #[error("recording too short: {duration_s} s (minimum {minimum_s} s)")]
    RecordingTooShort { duration_s: f64, minimum_s: f64 },

    #[error("training data contains a single class")]
    SingleClassInput,

    #[error("every training feature has zero variance")]
    NoUsableFeatures,

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("epoch grid mismatch: {0}")]
    GridMismatch(String),

    #[error("intervals are not sorted and disjoint: {0}")]
    UnsortedInput(String),

    #[error("cohort is empty")]
    EmptyCohort,

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::MissingFile(_) => 1,
            Error::DatabaseTooSmall { .. } => 3,
            Error::UnknownSubject(_) => 4,
            Error::MissingAnnotations(_) | Error::NoAnnotations(_) => 5,
            _ => 2,
        }
    }

    pub(crate) fn invariant(subject: &str, check: impl Into<String>) -> Self {
        Error::InvariantViolation {
            subject: subject.to_string(),
            check: check.into(),
        }
    }
}
