//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Relative error with denominator `max(|analytic|, |numeric|, 1e-6)`.
///
/// The floor keeps rounding noise of the finite difference (about
/// `1e-16 / eps`) from dominating coordinates whose true gradient is zero,
/// such as attention key biases.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Checks the gradient of the scalar `f(x)` with respect to `x`.
pub fn grad_check<F>(x: &Tensor<f64>, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape<'_, f64>, Var) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let id = store.add("x", x.clone());
    let report = grad_check_params(&mut store, eps, None, 0, |tape| {
        let v = tape.param(id);
        f(tape, v)
    })?;
    Ok(report.max_relative_error)
}

fn eval<F>(store: &ParamStore<f64>, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let out = f(&mut tape)?;
    Ok(tape.value(out).item())
}

/// Checks every parameter of `store` against `f` on inference tapes. With
/// `coords_per_param`, a seeded sample of that many coordinates is checked
/// per parameter instead of all of them.
pub fn grad_check_params<F>(
    store: &mut ParamStore<f64>,
    eps: f64,
    coords_per_param: Option<usize>,
    seed: u64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(invalid("grad_check", format!("eps must be positive, got {eps}")));
    }
    let analytic = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        tape.backward(out)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let n = store.value(id).numel();
        let coords: Vec<usize> = match coords_per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let original = store.value(id).data()[c];
            store.value_mut(id).data_mut()[c] = original + eps;
            let plus = eval(store, &f)?;
            store.value_mut(id).data_mut()[c] = original - eps;
            let minus = eval(store, &f)?;
            store.value_mut(id).data_mut()[c] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[c]);
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((store.name(id).to_string(), c));
            }
        }
    }
    Ok(report)
}
