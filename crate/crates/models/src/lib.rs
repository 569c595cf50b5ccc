//! Encoder-decoder models for multi-property extraction: an LSTM baseline,
//! a single-source transformer reading `properties ⊢ article`, and a
//! dual-source transformer whose one encoder reads the article and the
//! property names separately.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decode;
pub mod error;
pub mod model;
pub mod train;

pub use checkpoint::{load_model, save_model, ModelMetadata};
pub use config::{Activation, Architecture, CrossAttentionOrder, ModelConfig, Positional, TrainConfig};
pub use data::{prepare_example, prepare_examples, Example};
pub use decode::{decode, predict, Hypothesis, StepModel, Strategy};
pub use error::{Error, Result};
pub use model::Model;
pub use train::{
    evaluate, train, Control, CurvePoint, EarlyStopping, StopReason, TrainOutcome, TrainingCurve, Verdict,
};

pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
