use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error("trial {trial} does not match the search space: {message}")]
    Mismatch { trial: usize, message: String },
    #[error("trial {trial} has no intermediate value at step {step}")]
    MissingIntermediate { trial: usize, step: u64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}
