use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped loosely by the layer that raises them. The CLI maps
/// them onto exit codes via [`Error::is_data_error`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("record {id:?}: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("missing required column {0:?}")]
    MissingColumn(String),

    #[error("inconsistent feature sets across records: {0}")]
    InconsistentFeatures(String),

    #[error("empty statistic input")]
    EmptyStatistic,

    #[error("degenerate correlation input")]
    DegenerateCorrelation,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported capability: {0}")]
    Unsupported(&'static str),

    #[error("record not covered by file backend: {0}")]
    NotCovered(String),

    #[error("group {group}: {message}")]
    Group { group: String, message: String },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no gold scores in {0}")]
    NoGold(String),

    #[error("config key {key:?}: {message}")]
    Config { key: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn group(group: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Error::Group {
            group: group.into(),
            message: err.to_string(),
        }
    }

    /// Usage-level mistakes (bad flags, bad config values) as opposed to bad
    /// input data.
    pub fn is_usage_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidArgument(_))
    }

    pub fn is_data_error(&self) -> bool {
        !self.is_usage_error()
    }
}
