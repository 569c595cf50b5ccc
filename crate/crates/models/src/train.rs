//! Mini-batch training with validation-based early stopping, and evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use mpe_autograd::{AdamW, Scalar, Tape};
use mpe_core::diagnostics::DiagnosticLabels;
use mpe_core::metrics::{answer_set, build_report, mmp_f1, MetricReport};
use mpe_core::tokenizer::Vocabulary;
use mpe_core::{MpeRecord, NormalizationPolicy, PropertyValuePair};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::Example;
use crate::decode::{hypothesis_pairs, predict, Strategy};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive validations without a strict
/// improvement of the best metric. The first validation sets the best.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience: patience.max(1),
            best: None,
            since_best: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, metric: f64) -> Verdict {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.since_best = 0;
            return Verdict::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub loss: f64,
    pub mmp_f1: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    /// One validation per line: step, loss and MMP-F1, tab separated. Wall
    /// time is left out so that reruns produce identical files.
    pub fn to_text(&self) -> String {
        let mut out = String::from("step\tloss\tmmp_f1\n");
        for p in &self.points {
            out.push_str(&format!("{}\t{:.6}\t{:.6}\n", p.step, p.loss, p.mmp_f1));
        }
        out
    }
}

/// What a validation observer asks the trainer to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Prune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    EarlyStopping,
    Pruned,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    /// Parameters from the best validation.
    pub model: Model<T>,
    pub best_step: u64,
    pub best_mmp_f1: f64,
    pub steps: u64,
    pub curve: TrainingCurve,
    pub stop_reason: StopReason,
}

/// Validation loss (mean per token) and MMP-F1 on `examples`.
pub fn validate<T: Scalar>(
    model: &Model<T>,
    examples: &[Example],
    vocab: &Vocabulary,
    strategy: Strategy,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    let mut scored = Vec::with_capacity(examples.len());
    let policy = NormalizationPolicy::default();
    for example in examples {
        let mut tape = Tape::new(model.params());
        let (loss, count) = model.example_loss(&mut tape, example)?;
        total += tape.value(loss).item().to_f64().unwrap_or(f64::NAN);
        tokens += count;
        let hypothesis = predict(model, example, strategy)?;
        let predicted = hypothesis_pairs(vocab, &hypothesis);
        scored.push((answer_set(&example.pairs, &policy), answer_set(&predicted, &policy)));
    }
    Ok((total / tokens.max(1) as f64, mmp_f1(&scored)?))
}

fn tape_seed(seed: u64, step: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step)
}

/// Trains `model`, validating every `validate_every` steps and once more at
/// the end. `on_validation` sees every curve point and may prune the run.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    train_set: &[Example],
    validation_set: &[Example],
    vocab: &Vocabulary,
    config: &TrainConfig,
    mut on_validation: impl FnMut(&CurvePoint) -> Control,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    if validation_set.is_empty() {
        return Err(Error::InvalidInput("validation split is empty".into()));
    }
    let sample = &validation_set[..validation_set.len().min(config.validation_sample.max(1))];
    let strategy = Strategy::from_width(config.validation_beam);
    let mut optimizer = AdamW::new(config.optimizer.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = (model.params().clone(), 0u64);
    let mut curve = TrainingCurve::default();
    let started = Instant::now();
    let mut step = 0u64;
    let mut stop_reason = StopReason::MaxSteps;

    while step < config.max_steps {
        if cursor >= order.len() {
            order = (0..train_set.len()).collect();
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let batch: Vec<&Example> = order[cursor..end].iter().map(|&i| &train_set[i]).collect();
        cursor = end;
        step += 1;

        let grads = {
            let mut tape = Tape::training(model.params(), tape_seed(config.seed, step));
            let loss = model.batch_loss(&mut tape, &batch)?;
            let value = tape.value(loss).item().to_f64().unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { step, loss: value });
            }
            tape.backward(loss)?
        };
        optimizer.step(model.params_mut(), &grads)?;

        let timed_out = config
            .max_wall_seconds
            .is_some_and(|limit| started.elapsed().as_secs_f64() >= limit);
        let due = step.is_multiple_of(config.validate_every) || step == config.max_steps || timed_out;
        if !due {
            continue;
        }
        let (loss, f1) = validate(&model, sample, vocab, strategy)?;
        let point = CurvePoint {
            step,
            loss,
            mmp_f1: f1,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        curve.points.push(point);
        let verdict = stopper.observe(f1);
        if verdict == Verdict::Improved {
            best = (model.params().clone(), step);
        }
        if on_validation(&point) == Control::Prune {
            stop_reason = StopReason::Pruned;
            break;
        }
        if verdict == Verdict::Stop {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
        if timed_out {
            stop_reason = StopReason::TimeLimit;
            break;
        }
    }
    let config_model = model.config().clone();
    let vocab_size = model.vocab_size();
    let (params, best_step) = best;
    Ok(TrainOutcome {
        model: Model::from_params(config_model, vocab_size, params)?,
        best_step,
        best_mmp_f1: stopper.best().unwrap_or(0.0),
        steps: step,
        curve,
        stop_reason,
    })
}

/// Decodes every example; keys are article ids.
pub fn predict_all<T: Scalar>(
    model: &Model<T>,
    examples: &[Example],
    vocab: &Vocabulary,
    strategy: Strategy,
) -> Result<BTreeMap<String, Vec<PropertyValuePair>>> {
    let mut out = BTreeMap::new();
    for example in examples {
        let hypothesis = predict(model, example, strategy)?;
        out.insert(example.article_id.clone(), hypothesis_pairs(vocab, &hypothesis));
    }
    Ok(out)
}

/// Decodes `examples` (built from `split`) and scores them with subset
/// breakdowns from `labels`.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    split: &[MpeRecord],
    examples: &[Example],
    vocab: &Vocabulary,
    strategy: Strategy,
    labels: &DiagnosticLabels,
    policy: &NormalizationPolicy,
) -> Result<(BTreeMap<String, Vec<PropertyValuePair>>, MetricReport)> {
    if model.vocab_size() != vocab.size() {
        return Err(Error::VocabMismatch(format!(
            "model has {} pieces, vocabulary has {}",
            model.vocab_size(),
            vocab.size()
        )));
    }
    let predictions = predict_all(model, examples, vocab, strategy)?;
    let report = build_report(split, &predictions, labels, policy)?;
    Ok((predictions, report))
}
