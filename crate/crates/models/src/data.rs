//! Turning records into token-id examples.

use mpe_core::tokenizer::{serialize_pairs, PairOrder, Vocabulary, BOS, EOS, FIELD_SEP, PAIR_SEP};
use mpe_core::{MpeRecord, PropertyValuePair};

use crate::config::ModelConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub article_id: String,
    /// Article tokens (dual-source first source).
    pub article: Vec<u32>,
    /// Requested property names joined by the pair separator (dual-source
    /// second source).
    pub properties: Vec<u32>,
    /// `properties FIELD_SEP article` for single-source models.
    pub source: Vec<u32>,
    /// `BOS target EOS`; decoder input is all but the last token, labels all
    /// but the first.
    pub target: Vec<u32>,
    pub pairs: Vec<PropertyValuePair>,
}

impl Example {
    pub fn target_tokens(&self) -> usize {
        self.target.len().saturating_sub(1)
    }
}

/// Text of the property source: distinct names in record order.
pub fn property_prompt(record: &MpeRecord) -> String {
    record.properties().join(&format!(" {PAIR_SEP} "))
}

pub fn prepare_example(
    record: &MpeRecord,
    vocab: &Vocabulary,
    config: &ModelConfig,
    order: PairOrder,
) -> Result<Example> {
    let max_src = config.max_source_len;
    let prompt = property_prompt(record);
    let mut target = vec![BOS];
    let body = vocab.encode(&serialize_pairs(&record.pairs, order)?, config.max_target_len - 2);
    target.extend(body);
    target.push(EOS);
    Ok(Example {
        article_id: record.article_id.clone(),
        article: vocab.encode(&record.text, max_src),
        properties: vocab.encode(&prompt, max_src),
        source: vocab.encode(&format!("{prompt} {FIELD_SEP} {}", record.text), max_src),
        target,
        pairs: record.pairs.clone(),
    })
}

pub fn prepare_examples(
    records: &[MpeRecord],
    vocab: &Vocabulary,
    config: &ModelConfig,
    order: PairOrder,
) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| prepare_example(r, vocab, config, order))
        .collect()
}
