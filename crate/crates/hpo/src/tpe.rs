//! Tree-structured Parzen Estimator.
//!
//! Every parameter is handled independently. Completed trials are ranked;
//! the top `gamma` fraction (at least one) forms the good set, the rest the
//! bad set. Each set becomes a density: for ranges a mixture of truncated
//! Gaussians, one per observation plus a wide prior component at the range
//! midpoint; for categoricals add-one smoothed counts. Candidates are drawn
//! from the good density and the one maximizing good/bad wins.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::space::{ParamSpec, ParamValue, Params, SearchSpace};
use crate::trial::{Direction, Trial};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_candidates: usize,
    /// Completed trials needed before the densities are used.
    pub startup_trials: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.15,
            n_candidates: 24,
            startup_trials: 5,
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Mixture of equally weighted Gaussians truncated to `[low, high]`.
#[derive(Debug, Clone)]
pub struct Parzen {
    low: f64,
    high: f64,
    mus: Vec<f64>,
    sigmas: Vec<f64>,
}

impl Parzen {
    pub fn fit(observations: &[f64], low: f64, high: f64) -> Self {
        let range = (high - low).max(f64::MIN_POSITIVE);
        let floor = 1e-3 * range;
        let bandwidth = (range / observations.len().max(1) as f64).max(floor);
        let mut mus: Vec<f64> = observations.to_vec();
        let mut sigmas = vec![bandwidth; observations.len()];
        mus.push(0.5 * (low + high));
        sigmas.push(range);
        Self { low, high, mus, sigmas }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if self.high <= self.low {
            return 1.0;
        }
        let n = self.mus.len() as f64;
        self.mus
            .iter()
            .zip(&self.sigmas)
            .map(|(&mu, &s)| {
                let mass = std_normal_cdf((self.high - mu) / s) - std_normal_cdf((self.low - mu) / s);
                let z = (x - mu) / s;
                (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()) / mass.max(1e-300)
            })
            .sum::<f64>()
            / n
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.high <= self.low {
            return self.low;
        }
        let k = rng.random_range(0..self.mus.len());
        let normal = Normal::new(self.mus[k], self.sigmas[k]).expect("positive bandwidth");
        for _ in 0..64 {
            let x = normal.sample(rng);
            if (self.low..=self.high).contains(&x) {
                return x;
            }
        }
        self.mus[k].clamp(self.low, self.high)
    }
}

/// Add-one smoothed category frequencies.
fn category_weights(indices: &[usize], n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    for &i in indices {
        w[i] += 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn sample_weighted(weights: &[f64], rng: &mut impl Rng) -> usize {
    let mut u = rng.random::<f64>();
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Uniform (log-uniform where marked) draw from the declared space.
pub fn sample_prior(space: &SearchSpace, rng: &mut impl Rng) -> Params {
    space
        .params
        .iter()
        .map(|(name, spec)| {
            let value = match spec {
                ParamSpec::Categorical { choices } => choices[rng.random_range(0..choices.len())].clone(),
                ParamSpec::Int { low, high, log: false } => ParamValue::Int(rng.random_range(*low..=*high)),
                _ => {
                    let (lo, hi) = spec.internal_bounds().expect("range parameter");
                    let x = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                    spec.from_internal(x)
                }
            };
            (name.clone(), value)
        })
        .collect()
}

/// Proposes parameters given the trial history. Only completed trials
/// inform the densities; others are ignored.
pub fn suggest(
    space: &SearchSpace,
    history: &[Trial],
    direction: Direction,
    config: &TpeConfig,
    rng: &mut impl Rng,
) -> Result<Params> {
    if !(config.gamma > 0.0 && config.gamma < 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", config.gamma)));
    }
    if config.n_candidates == 0 {
        return Err(Error::Config("n_candidates must be positive".into()));
    }
    let mut completed: Vec<&Trial> = history.iter().filter(|t| t.is_completed()).collect();
    for t in &completed {
        space
            .check(&t.params)
            .map_err(|message| Error::Mismatch { trial: t.id, message })?;
        if !t.value.is_some_and(f64::is_finite) {
            return Err(Error::Mismatch {
                trial: t.id,
                message: "completed trial without a finite objective".into(),
            });
        }
    }
    if completed.len() < config.startup_trials.max(1) {
        return Ok(sample_prior(space, rng));
    }
    // Best first; ties keep trial order.
    completed.sort_by(|a, b| {
        let (va, vb) = (direction.orient(a.value.unwrap()), direction.orient(b.value.unwrap()));
        vb.total_cmp(&va).then(a.id.cmp(&b.id))
    });
    let n_good = ((config.gamma * completed.len() as f64).ceil() as usize).clamp(1, completed.len());
    let (good, bad) = completed.split_at(n_good);

    let mut out = Params::new();
    for (name, spec) in &space.params {
        let value = match spec {
            ParamSpec::Categorical { choices } => {
                let index = |t: &&Trial| choices.iter().position(|c| c == &t.params[name]).expect("checked");
                let l = category_weights(&good.iter().map(index).collect::<Vec<_>>(), choices.len());
                let g = category_weights(&bad.iter().map(index).collect::<Vec<_>>(), choices.len());
                let mut best = (f64::NEG_INFINITY, 0usize);
                for _ in 0..config.n_candidates {
                    let c = sample_weighted(&l, rng);
                    let score = l[c] / g[c];
                    if score > best.0 {
                        best = (score, c);
                    }
                }
                choices[best.1].clone()
            }
            _ => {
                let (lo, hi) = spec.internal_bounds().expect("range parameter");
                let xs = |set: &[&Trial]| -> Vec<f64> {
                    set.iter()
                        .map(|t| spec.to_internal_value(&t.params[name]).expect("checked"))
                        .collect()
                };
                let l = Parzen::fit(&xs(good), lo, hi);
                let g = Parzen::fit(&xs(bad), lo, hi);
                let mut best = (f64::NEG_INFINITY, lo);
                for _ in 0..config.n_candidates {
                    let x = l.sample(rng);
                    let score = l.pdf(x).ln() - g.pdf(x).max(1e-300).ln();
                    if score > best.0 {
                        best = (score, x);
                    }
                }
                spec.from_internal(best.1)
            }
        };
        out.insert(name.clone(), value);
    }
    Ok(out)
}
