//! AdamW with learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Linear warmup to the base rate, then `base * sqrt(warmup / step)`.
    InverseSqrt {
        warmup: u64,
    },
    /// Linear warmup, then linear decay reaching 0 at `total` steps.
    LinearDecay {
        warmup: u64,
        total: u64,
    },
}

impl Schedule {
    /// Multiplier of the base rate at 1-based `step`.
    pub fn factor(&self, step: u64) -> f64 {
        let t = step.max(1) as f64;
        match *self {
            Schedule::Constant => 1.0,
            Schedule::InverseSqrt { warmup } => {
                let w = warmup.max(1) as f64;
                if t < w {
                    t / w
                } else {
                    (w / t).sqrt()
                }
            }
            Schedule::LinearDecay { warmup, total } => {
                let total = total.max(1) as f64;
                if warmup > 0 && t < warmup as f64 {
                    t / warmup as f64
                } else {
                    let w = (warmup as f64).min(total - 1.0).max(0.0);
                    ((total - t) / (total - w)).clamp(0.0, 1.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.0,
            schedule: Schedule::InverseSqrt { warmup: 100 },
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub step: u64,
    /// First and second moments per parameter, allocated on first use.
    pub moments: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr * self.config.schedule.factor(self.step)
    }

    /// One update. Parameters without gradients are left untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if !grads.is_finite() {
            let bad = grads
                .iter()
                .find(|(_, g)| !g.is_finite())
                .map(|(id, _)| store.name(id).to_string())
                .unwrap_or_default();
            return Err(Error::NonFinite(format!("gradient of parameter {bad:?}")));
        }
        let mut grads = grads.clone();
        if let Some(max) = self.config.clip_norm {
            grads.clip_global_norm(T::lit(max));
        }
        self.step += 1;
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        let c = &self.config;
        let lr = T::lit(c.lr * c.schedule.factor(self.step));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::one() - T::lit(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::lit(c.beta2.powi(self.step as i32));
        let eps = T::lit(c.eps);
        let wd = T::lit(c.weight_decay);
        for (id, g) in grads.iter() {
            let param = store.value_mut(id);
            let (m, v) = self.moments[id.0]
                .get_or_insert_with(|| (Tensor::zeros(g.shape().to_vec()), Tensor::zeros(g.shape().to_vec())));
            for (((p, &gi), mi), vi) in param
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
                *p -= lr * wd * *p;
            }
        }
        Ok(())
    }
}
