use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate article_id {article_id:?}")]
    DuplicateArticle { line: usize, article_id: String },
    #[error("line {line}: record {article_id:?} has no pairs")]
    EmptyPairs { line: usize, article_id: String },
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("conflicting texts for article {0:?}")]
    ConflictingText(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("split infeasible: {0}")]
    Infeasible(String),
    #[error("article {0:?} missing from assignment")]
    MissingAssignment(String),
    #[error("missing prediction for article {0:?}")]
    MissingPrediction(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("vocabulary size {requested} too small; minimum feasible size is {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("vocabulary file: {0}")]
    VocabFormat(String),
    #[error("reserved separator {separator:?} inside pair text {text:?}")]
    ReservedSeparator { separator: String, text: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
