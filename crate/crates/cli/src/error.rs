use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, missing inputs or conflicting settings; nothing was written.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] mpe_core::Error),
    #[error(transparent)]
    Model(#[from] mpe_models::Error),
    #[error(transparent)]
    Study(#[from] mpe_hpo::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category printed as `error[category]`.
    pub fn category(&self) -> &'static str {
        use mpe_core::Error as D;
        use mpe_models::Error as M;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } | CliError::Data(D::Io { .. }) => "io",
            CliError::Config(_) | CliError::Data(D::Config(_)) | CliError::Model(M::Config(_)) => "config",
            CliError::Data(D::Infeasible(_)) => "infeasible",
            CliError::Data(_) => "data",
            CliError::Model(M::VocabMismatch(_)) => "vocab-mismatch",
            CliError::Model(M::NonFiniteLoss { .. }) => "training",
            CliError::Model(M::Checkpoint(_)) => "checkpoint",
            CliError::Model(_) => "model",
            CliError::Study(_) => "study",
        }
    }

    /// 2 for usage errors, 1 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
