//! Saving and loading models together with their configuration.

use std::path::Path;

use mpe_autograd::{AdamW, Checkpoint, Scalar};
use mpe_core::tokenizer::Vocabulary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub model: ModelConfig,
    pub vocab_size: usize,
    /// SHA-256 of the vocabulary file contents.
    pub vocab_digest: String,
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn vocab_digest(vocab: &Vocabulary) -> String {
    let digest = Sha256::digest(vocab.to_text().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_model<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocabulary,
    optimizer: Option<&AdamW<T>>,
    extra: serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<()> {
    let meta = ModelMetadata {
        model: model.config().clone(),
        vocab_size: model.vocab_size(),
        vocab_digest: vocab_digest(vocab),
        extra,
    };
    let meta = serde_json::to_value(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut ckpt = Checkpoint::new(model.params().clone(), meta);
    if let Some(opt) = optimizer {
        ckpt = ckpt.with_optimizer(opt);
    }
    Ok(ckpt.save(path)?)
}

/// Loads a model and checks that `vocab` is the one it was trained with.
pub fn load_model<T: Scalar>(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<(Model<T>, ModelMetadata)> {
    let ckpt = Checkpoint::<T>::load(path)?;
    let meta: ModelMetadata =
        serde_json::from_value(ckpt.metadata.clone()).map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    if meta.vocab_size != vocab.size() || meta.vocab_digest != vocab_digest(vocab) {
        return Err(Error::VocabMismatch(format!(
            "checkpoint was trained with a different vocabulary ({} pieces, given {})",
            meta.vocab_size,
            vocab.size()
        )));
    }
    let model = Model::from_params(meta.model.clone(), meta.vocab_size, ckpt.params)?;
    Ok((model, meta))
}
