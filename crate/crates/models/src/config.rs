use mpe_autograd::{AdamWConfig, Schedule};
use mpe_core::tokenizer::{PairOrder, DEFAULT_MAX_LEN};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// LSTM encoder-decoder without attention over the concatenated source.
    Seq2seq,
    /// Encoder-decoder transformer over the concatenated source.
    Transformer,
    /// One shared encoder applied to the article and to the property names,
    /// with a decoder attending to both.
    DualSource,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq2seq" => Ok(Self::Seq2seq),
            "transformer" => Ok(Self::Transformer),
            "dual_source" | "dual-source" => Ok(Self::DualSource),
            _ => Err(Error::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    Sinusoidal,
    Learned,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossAttentionOrder {
    PropertiesThenArticle,
    ArticleThenProperties,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub embedding_dim: usize,
    pub ffn_dim: usize,
    pub attention_heads: usize,
    pub activation: Activation,
    pub positional: Positional,
    pub hidden_dropout: f64,
    pub attention_dropout: f64,
    pub activation_dropout: f64,
    /// One matrix for source embeddings, target embeddings and the output
    /// projection.
    pub tie_all_embeddings: bool,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub cross_attention_order: CrossAttentionOrder,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::DualSource,
            encoder_layers: 2,
            decoder_layers: 2,
            embedding_dim: 64,
            ffn_dim: 128,
            attention_heads: 4,
            activation: Activation::Relu,
            positional: Positional::Sinusoidal,
            hidden_dropout: 0.0,
            attention_dropout: 0.0,
            activation_dropout: 0.0,
            tie_all_embeddings: false,
            max_source_len: DEFAULT_MAX_LEN,
            max_target_len: 128,
            cross_attention_order: CrossAttentionOrder::PropertiesThenArticle,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.encoder_layers < 1 || self.decoder_layers < 1 {
            return fail("layer counts must be at least 1".into());
        }
        if self.embedding_dim == 0 || self.ffn_dim == 0 || self.attention_heads == 0 {
            return fail("dimensions and head count must be positive".into());
        }
        if !self.embedding_dim.is_multiple_of(self.attention_heads) {
            return fail(format!(
                "embedding_dim {} is not divisible by attention_heads {}",
                self.embedding_dim, self.attention_heads
            ));
        }
        for (name, p) in [
            ("hidden_dropout", self.hidden_dropout),
            ("attention_dropout", self.attention_dropout),
            ("activation_dropout", self.activation_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1), got {p}"));
            }
        }
        if self.max_source_len == 0 || self.max_target_len < 2 {
            return fail("max_source_len must be positive and max_target_len at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub validate_every: u64,
    /// Consecutive non-improving validations tolerated before stopping.
    pub patience: usize,
    pub max_steps: u64,
    pub seed: u64,
    /// Beam width used by `evaluate`.
    pub beam_size: usize,
    /// Validation articles scored at each validation (all when larger).
    pub validation_sample: usize,
    /// Beam width used during validation.
    pub validation_beam: usize,
    /// Order of pairs in training targets.
    pub target_order: PairOrder,
    /// Stops training once this much wall time has elapsed.
    pub max_wall_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            optimizer: AdamWConfig {
                lr: 5e-4,
                schedule: Schedule::LinearDecay {
                    warmup: 100,
                    total: 3000,
                },
                ..AdamWConfig::default()
            },
            validate_every: 250,
            patience: 3,
            max_steps: 3000,
            seed: 0,
            beam_size: 8,
            validation_sample: 64,
            validation_beam: 1,
            target_order: PairOrder::Input,
            max_wall_seconds: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 || self.validate_every < 1 {
            return Err(Error::Config("patience and validate_every must be at least 1".into()));
        }
        if self.batch_size < 1 || self.beam_size < 1 || self.validation_beam < 1 {
            return Err(Error::Config("batch and beam sizes must be at least 1".into()));
        }
        Ok(())
    }
}
