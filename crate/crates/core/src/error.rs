use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: missing required column `{0}`")]
    MissingColumn(&'static str),

    #[error("schema error at line {line}: {reason}")]
    BadRow { line: u64, reason: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("vocabulary is empty: no document produced an in-list token")]
    EmptyVocabulary,

    #[error("shape mismatch: expected {expected} columns, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("cannot fit a model on zero rows")]
    EmptyTrainingSet,

    #[error("length mismatch: {what} has {actual} entries, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("feature selection failed: no violation level yields a two-class instance set")]
    SelectionFailure,

    #[error("no swept threshold produced a positive training prediction")]
    FilterDegenerate,

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown project `{name}` (available: {available})")]
    UnknownProject { name: String, available: String },

    #[error("comment {0} was already reviewed")]
    AlreadyReviewed(usize),

    #[error("no comment with id {0} in this pool")]
    UnknownComment(u64),

    #[error("no unreviewed comments left in the pool")]
    PoolExhausted,

    #[error("session `{0}` not found")]
    SessionNotFound(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
