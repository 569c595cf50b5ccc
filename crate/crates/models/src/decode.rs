//! Greedy and beam-search decoding.
//!
//! Search is written against [`StepModel`], so it runs unchanged on toy
//! distributions in tests. PAD and BOS are never generated.

use std::cmp::Ordering;

use mpe_autograd::{Scalar, Tape, Tensor};
use mpe_core::tokenizer::{parse_pairs, Vocabulary, BOS, EOS, PAD};
use mpe_core::PropertyValuePair;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::model::{EncodedValues, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Beam(usize),
}

impl Strategy {
    /// Beam width 1 is greedy search.
    pub fn from_width(width: usize) -> Self {
        if width == 1 {
            Self::Greedy
        } else {
            Self::Beam(width)
        }
    }
}

/// A next-token distribution conditioned on a prefix.
pub trait StepModel {
    type State: Clone;

    /// Log-probabilities over the vocabulary for the token after `prefix`.
    /// `state` is the state before the last token of `prefix` was consumed;
    /// the returned state has consumed it.
    fn step(&self, state: &Self::State, prefix: &[u32]) -> Result<(Vec<f64>, Self::State)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens without BOS; ends with EOS when `finished`.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability divided by the number of generated tokens.
    pub fn normalized_score(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }

    /// Generated tokens without the closing EOS.
    pub fn content(&self) -> &[u32] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }
}

/// Log-softmax of `logits` with PAD and BOS removed from the support.
pub fn log_softmax_masked(logits: &[f64]) -> Vec<f64> {
    let allowed = |i: usize| i as u32 != PAD && i as u32 != BOS;
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| allowed(i))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| allowed(i))
        .map(|(_, &x)| (x - max).exp())
        .sum();
    let log_z = max + z.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, &x)| if allowed(i) { x - log_z } else { f64::NEG_INFINITY })
        .collect()
}

pub fn decode<M: StepModel>(model: &M, init: M::State, strategy: Strategy, max_len: usize) -> Result<Hypothesis> {
    match strategy {
        Strategy::Greedy => greedy(model, init, max_len),
        Strategy::Beam(0) => Err(Error::Config("beam width must be at least 1".into())),
        Strategy::Beam(width) => beam(model, init, width, max_len),
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Picks the most probable token at every step (lowest id on ties) until
/// EOS or `max_len` generated tokens.
pub fn greedy<M: StepModel>(model: &M, init: M::State, max_len: usize) -> Result<Hypothesis> {
    let mut prefix = vec![BOS];
    let mut state = init;
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let (lp, next) = model.step(&state, &prefix)?;
        state = next;
        let token = argmax(&lp);
        log_prob += lp[token];
        prefix.push(token as u32);
        if token as u32 == EOS {
            return Ok(Hypothesis {
                tokens: prefix[1..].to_vec(),
                log_prob,
                finished: true,
            });
        }
    }
    Ok(Hypothesis {
        tokens: prefix[1..].to_vec(),
        log_prob,
        finished: false,
    })
}

struct Beam<S> {
    prefix: Vec<u32>,
    log_prob: f64,
    state: S,
}

/// Beam search: each step keeps the `width` best expansions by cumulative
/// log-probability (ties: lower token id, then earlier beam); expansions
/// ending in EOS leave the beam. Stops once `width` hypotheses finished or
/// at `max_len`, then returns the best finished hypothesis by
/// length-normalized score (or the best open one if none finished).
pub fn beam<M: StepModel>(model: &M, init: M::State, width: usize, max_len: usize) -> Result<Hypothesis> {
    let pool = beam_pool(model, init, width, max_len)?;
    let any_finished = pool.iter().any(|h| h.finished);
    // Earlier entries win ties; they had the higher raw score.
    let mut best: Option<Hypothesis> = None;
    for h in pool.into_iter().filter(|h| h.finished || !any_finished) {
        if best
            .as_ref()
            .is_none_or(|b| h.normalized_score() > b.normalized_score())
        {
            best = Some(h);
        }
    }
    best.ok_or_else(|| Error::InvalidInput("beam search produced no hypothesis".into()))
}

/// Every hypothesis beam search ends with: the finished ones in the order
/// found, then any beams still open when the length limit was reached.
pub fn beam_pool<M: StepModel>(model: &M, init: M::State, width: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let mut live = vec![Beam {
        prefix: vec![BOS],
        log_prob: 0.0,
        state: init,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for depth in 1..=max_len {
        let mut states = Vec::with_capacity(live.len());
        let mut candidates: Vec<(f64, u32, usize)> = Vec::new();
        for (b, beam) in live.iter().enumerate() {
            let (lp, state) = model.step(&beam.state, &beam.prefix)?;
            states.push(state);
            for (token, &l) in lp.iter().enumerate() {
                if l.is_finite() {
                    candidates.push((beam.log_prob + l, token as u32, b));
                }
            }
        }
        candidates.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(Ordering::Equal)
                .then(x.1.cmp(&y.1))
                .then(x.2.cmp(&y.2))
        });
        let mut next = Vec::new();
        for &(score, token, b) in candidates.iter().take(width) {
            let mut prefix = live[b].prefix.clone();
            prefix.push(token);
            if token == EOS {
                finished.push(Hypothesis {
                    tokens: prefix[1..].to_vec(),
                    log_prob: score,
                    finished: true,
                });
            } else {
                next.push(Beam {
                    prefix,
                    log_prob: score,
                    state: states[b].clone(),
                });
            }
        }
        live = next;
        if depth < max_len && (finished.len() >= width || live.is_empty()) {
            return Ok(finished);
        }
    }
    finished.extend(live.into_iter().map(|b| Hypothesis {
        tokens: b.prefix[1..].to_vec(),
        log_prob: b.log_prob,
        finished: false,
    }));
    Ok(finished)
}

/// A model bound to one example's encoder outputs.
pub struct Session<'m, T: Scalar> {
    model: &'m Model<T>,
    memory: EncodedValues<T>,
}

/// Per-layer LSTM states; empty for transformers, which re-read the prefix.
pub type SessionState<T> = Vec<(Tensor<T>, Tensor<T>)>;

impl<'m, T: Scalar> Session<'m, T> {
    pub fn new(model: &'m Model<T>, example: &Example) -> Result<(Self, SessionState<T>)> {
        let mut tape = Tape::new(model.params());
        let encoded = model.encode(&mut tape, example)?;
        let memory = encoded.values(&tape);
        let init = match &memory {
            EncodedValues::Attention(_) => Vec::new(),
            EncodedValues::Recurrent(states) => (0..model.config().decoder_layers)
                .map(|i| states[i.min(states.len() - 1)].clone())
                .collect(),
        };
        Ok((Self { model, memory }, init))
    }
}

impl<T: Scalar> StepModel for Session<'_, T> {
    type State = SessionState<T>;

    fn step(&self, state: &Self::State, prefix: &[u32]) -> Result<(Vec<f64>, Self::State)> {
        let mut tape = Tape::new(self.model.params());
        let (logits, next) = match &self.memory {
            EncodedValues::Attention(_) => {
                let encoded = self.memory.load(&mut tape);
                (self.model.next_token_logits(&mut tape, &encoded, prefix)?, Vec::new())
            }
            EncodedValues::Recurrent(_) => {
                let vars: Vec<_> = state
                    .iter()
                    .map(|(h, c)| (tape.constant(h.clone()), tape.constant(c.clone())))
                    .collect();
                let last = *prefix
                    .last()
                    .ok_or_else(|| Error::InvalidInput("empty prefix".into()))?;
                let (logits, finals) = self.model.recurrent_step(&mut tape, &vars, last)?;
                let next = finals
                    .iter()
                    .map(|&(h, c)| (tape.value(h).clone(), tape.value(c).clone()))
                    .collect();
                (logits, next)
            }
        };
        let row: Vec<f64> = tape.value(logits).data().iter().map(|x| x.to_f64().unwrap()).collect();
        Ok((log_softmax_masked(&row), next))
    }
}

/// Decodes one example; the token budget leaves room for BOS.
pub fn predict<T: Scalar>(model: &Model<T>, example: &Example, strategy: Strategy) -> Result<Hypothesis> {
    let (session, init) = Session::new(model, example)?;
    decode(&session, init, strategy, model.config().max_target_len - 1)
}

/// Pairs parsed from generated tokens; malformed segments are dropped.
pub fn hypothesis_pairs(vocab: &Vocabulary, hypothesis: &Hypothesis) -> Vec<PropertyValuePair> {
    parse_pairs(&vocab.decode(hypothesis.content())).pairs
}
