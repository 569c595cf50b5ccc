pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] mpe_autograd::Error),
    #[error(transparent)]
    Data(#[from] mpe_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("loss became non-finite ({loss}) at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
