//! Data layer for multi-property extraction (MPE).
//!
//! An [`MpeRecord`] pairs one article with every `(property, value)` pair
//! expected from it. This crate reads and writes record streams, builds
//! leakage-free splits, labels diagnostic subsets, scores predictions and
//! trains the subword vocabulary shared by the models.

pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod normalize;
pub mod splitter;
pub mod synthetic;
pub mod tokenizer;

pub use corpus::{corpus_stats, CorpusStats, MpeRecord, PropertyValuePair};
pub use error::{Error, Result};
pub use normalize::NormalizationPolicy;
