use std::path::PathBuf;

use thiserror::Error;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate clock: {0} of {1} timestamp gaps are non-positive")]
    DegenerateClock(usize, usize),
    #[error("subject {0} is missing annotation field `{1}`")]
    UnannotatedSubject(String, &'static str),
    #[error("duplicate subject id {0}")]
    DuplicateSubject(String),
    #[error("invalid annotation for subject {0}: {1}")]
    InvalidAnnotation(String, String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("session of {0:.2} s is too short to trim {1} s from each end")]
    TooShortAfterTrim(f64, f64),
    #[error("segment length {0} is not the 500-sample Welch window")]
    BadWindow(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("wrong input kind for the {0} embedding")]
    InputKind(&'static str),
    #[error("bag has no real instances")]
    EmptyBag,
    #[error("bag has {have} real instances, need at least {need}")]
    BagTooSmall { have: usize, need: usize },
    #[error("training set contains a single class ({0})")]
    DegenerateLabels(String),
    #[error("need at least 2 subjects, got {0}")]
    TooFew(usize),
    #[error("k = {k} exceeds the number of subjects ({n})")]
    BadK { k: usize, n: usize },
    #[error("empty input")]
    Empty,
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no data: {0}")]
    NoData(String),
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },
    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status: 1 for usage and configuration problems, 2 for
    /// bad or missing data, 3 for failures inside the computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Fold { source, .. } => source.exit_code(),
            Error::Diverged(_) | Error::Shape(_) | Error::InputKind(_) | Error::Precondition(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format { what, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
