//! Sequential study runner and its JSON-lines log.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruner::PercentilePruner;
use crate::space::{Params, SearchSpace};
use crate::tpe::{sample_prior, suggest, TpeConfig};
use crate::trial::{Direction, Trial, TrialStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Tpe,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub n_trials: usize,
    pub gamma: f64,
    pub n_candidates: usize,
    pub startup_trials: usize,
    pub pruner_keep_fraction: f64,
    pub pruner_warmup_trials: usize,
    pub direction: Direction,
    pub sampler: Sampler,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_trials: 250,
            gamma: 0.15,
            n_candidates: 24,
            startup_trials: 5,
            pruner_keep_fraction: 0.10,
            pruner_warmup_trials: 5,
            direction: Direction::Maximize,
            sampler: Sampler::Tpe,
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(Error::Config("n_candidates must be positive".into()));
        }
        self.pruner().validate()
    }

    pub fn tpe(&self) -> TpeConfig {
        TpeConfig {
            gamma: self.gamma,
            n_candidates: self.n_candidates,
            startup_trials: self.startup_trials,
        }
    }

    pub fn pruner(&self) -> PercentilePruner {
        PercentilePruner {
            keep_fraction: self.pruner_keep_fraction,
            warmup_trials: self.pruner_warmup_trials,
        }
    }
}

/// Handed to the objective for reporting intermediate values.
pub struct TrialReporter<'a> {
    trial: Trial,
    history: &'a [Trial],
    pruner: PercentilePruner,
    direction: Direction,
    pruned: bool,
}

impl TrialReporter<'_> {
    pub fn params(&self) -> &Params {
        &self.trial.params
    }

    pub fn trial_id(&self) -> usize {
        self.trial.id
    }

    /// Records a validation result; returns true when the trial should stop.
    pub fn report(&mut self, step: u64, value: f64) -> bool {
        if self.pruned {
            return true;
        }
        if !self.trial.report(step, value, self.direction) {
            return false;
        }
        // The only error is a missing intermediate, which was just recorded.
        if self
            .pruner
            .should_prune(&self.trial, step, self.history, self.direction)
            .unwrap_or(false)
        {
            self.pruned = true;
            self.trial.pruned_at = Some(step);
        }
        self.pruned
    }

    pub fn is_pruned(&self) -> bool {
        self.pruned
    }
}

pub type ObjectiveError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub trials: Vec<Trial>,
    pub direction: Direction,
}

impl StudyResult {
    /// Best completed trial; the earliest wins ties.
    pub fn best(&self) -> Option<&Trial> {
        let mut best: Option<&Trial> = None;
        for t in self.trials.iter().filter(|t| t.is_completed()) {
            if best.is_none_or(|b| self.direction.better(t.value.unwrap(), b.value.unwrap())) {
                best = Some(t);
            }
        }
        best
    }

    pub fn count(&self, status: TrialStatus) -> usize {
        self.trials.iter().filter(|t| t.status == status).count()
    }
}

/// Runs `config.n_trials` trials one after another. The objective reports
/// intermediate values through the reporter and should return early once
/// `report` answers true; such trials are recorded as pruned whatever the
/// objective returns. Errors mark the trial failed. `on_trial` sees every
/// finished trial, e.g. to append it to a log.
pub fn run_study(
    space: &SearchSpace,
    config: &StudyConfig,
    mut objective: impl FnMut(&mut TrialReporter<'_>) -> std::result::Result<f64, ObjectiveError>,
    mut on_trial: impl FnMut(&Trial) -> Result<()>,
) -> Result<StudyResult> {
    space.validate()?;
    config.validate()?;
    let mut trials: Vec<Trial> = Vec::with_capacity(config.n_trials);
    let tpe = config.tpe();
    for id in 0..config.n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(id as u64);
        let params = match config.sampler {
            Sampler::Tpe => suggest(space, &trials, config.direction, &tpe, &mut rng)?,
            Sampler::Random => sample_prior(space, &mut rng),
        };
        let mut reporter = TrialReporter {
            trial: Trial::new(id, params),
            history: &trials,
            pruner: config.pruner(),
            direction: config.direction,
            pruned: false,
        };
        let outcome = objective(&mut reporter);
        let pruned = reporter.pruned;
        let mut trial = reporter.trial;
        match outcome {
            _ if pruned => trial.status = TrialStatus::Pruned,
            Ok(v) if v.is_finite() => {
                trial.status = TrialStatus::Completed;
                trial.value = Some(v);
            }
            Ok(v) => {
                trial.status = TrialStatus::Failed;
                trial.error = Some(format!("objective returned {v}"));
            }
            Err(e) => {
                trial.status = TrialStatus::Failed;
                trial.error = Some(e.to_string());
            }
        }
        on_trial(&trial)?;
        trials.push(trial);
    }
    Ok(StudyResult {
        trials,
        direction: config.direction,
    })
}

/// One JSON object per trial.
pub fn write_log(trials: &[Trial], out: &mut impl Write) -> std::io::Result<()> {
    for t in trials {
        serde_json::to_writer(&mut *out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_log(trials: &[Trial], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    write_log(trials, &mut file).map_err(io)?;
    file.flush().map_err(io)
}

pub fn load_log(path: impl AsRef<Path>) -> Result<Vec<Trial>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
