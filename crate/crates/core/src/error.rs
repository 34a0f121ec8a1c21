use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure of a single generation call against a backend.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },

    #[error("could not extract generated text: {0}")]
    Extraction(String),

    #[error("replay cache has no entry for {0}")]
    ReplayMiss(String),

    #[error("backend cannot serve this request: {0}")]
    Unsupported(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("invalid demonstration set: {0}")]
    InvalidDemonstrations(String),

    #[error("invalid prompt template: {0}")]
    Template(String),

    #[error("template `{0}` is aspect-based but a passage has no aspect")]
    MissingAspect(String),

    #[error(
        "comparison unavailable (prompt digests {first_digest}, {second_digest}); \
         {outstanding} call(s) outstanding: {source}"
    )]
    ComparisonUnavailable {
        first_digest: String,
        second_digest: String,
        outstanding: usize,
        #[source]
        source: BackendError,
    },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("probing set error: {0}")]
    Probing(String),

    #[error("context overflow: prompt needs ~{needed} tokens, budget is {budget}")]
    ContextOverflow { needed: usize, budget: usize },

    #[error("no label matched the generated text {0:?}")]
    UnparseablePrediction(String),

    #[error("contextual calibration singularity: content-free probability of label {0} is zero")]
    CalibrationSingularity(usize),

    #[error("unsupported by backend: {0}")]
    Unsupported(String),

    #[error("infeasible: every candidate failed ({0})")]
    Infeasible(String),

    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used for process exit codes and report cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Transport,
    Validation,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Template(_) => ErrorKind::Config,
            Error::ComparisonUnavailable { .. } | Error::Backend(_) => ErrorKind::Transport,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    /// Short tag written into "NA(...)" report cells.
    pub fn na_tag(&self) -> &'static str {
        match self {
            Error::ContextOverflow { .. } => "context-overflow",
            Error::Unsupported(_) | Error::Backend(BackendError::Unsupported(_)) => "unsupported",
            Error::Infeasible(_) => "infeasible",
            Error::UnparseablePrediction(_) => "unparseable",
            Error::CalibrationSingularity(_) => "calibration-singularity",
            Error::ComparisonUnavailable { .. } | Error::Backend(_) => "transport",
            Error::Calibration(_) => "calibration",
            Error::Probing(_) => "probing",
            _ => "error",
        }
    }
}
