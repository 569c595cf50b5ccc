//! Percentile pruning of unpromising trials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{Direction, Trial, TrialStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentilePruner {
    /// Fraction of trials allowed to continue at each step.
    pub keep_fraction: f64,
    /// Completed trials required before pruning starts.
    pub warmup_trials: usize,
}

impl Default for PercentilePruner {
    fn default() -> Self {
        Self {
            keep_fraction: 0.10,
            warmup_trials: 5,
        }
    }
}

/// Linear-interpolated quantile of sorted `values` (`q` in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let below = pos.floor() as usize;
    let above = pos.ceil() as usize;
    sorted[below] + (pos - below as f64) * (sorted[above] - sorted[below])
}

impl PercentilePruner {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "keep_fraction must lie in (0, 1], got {}",
                self.keep_fraction
            )));
        }
        Ok(())
    }

    /// Whether `trial` should stop at `step`. Its best-so-far value is
    /// compared with every trial's best-so-far value at that step (its own
    /// included) and pruned iff strictly worse than the `1 - keep_fraction`
    /// quantile. Needs `warmup_trials` completed trials and at least two
    /// values at the step.
    pub fn should_prune(&self, trial: &Trial, step: u64, trials: &[Trial], direction: Direction) -> Result<bool> {
        let value = *trial
            .intermediate
            .get(&step)
            .ok_or(Error::MissingIntermediate { trial: trial.id, step })?;
        let completed = trials.iter().filter(|t| t.status == TrialStatus::Completed).count();
        if completed < self.warmup_trials || self.keep_fraction >= 1.0 {
            return Ok(false);
        }
        let mut values: Vec<f64> = trials
            .iter()
            .filter(|t| t.id != trial.id)
            .filter_map(|t| t.intermediate.get(&step))
            .map(|&v| direction.orient(v))
            .collect();
        values.push(direction.orient(value));
        if values.len() < 2 {
            return Ok(false);
        }
        values.sort_by(f64::total_cmp);
        let threshold = quantile(&values, 1.0 - self.keep_fraction);
        Ok(direction.orient(value) < threshold)
    }
}
