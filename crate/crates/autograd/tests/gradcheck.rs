//! Finite-difference checks of every differentiable op at 64-bit.

use mpe_autograd::gradcheck::relative_error;
use mpe_autograd::{grad_check, grad_check_params, ParamStore, Reduction, Result, Tape, Tensor, Tensor64, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Contracts `y` with fixed random weights so every output coordinate
/// influences the scalar being differentiated.
fn project(tape: &mut Tape<'_, f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::randn(tape.shape(y).to_vec(), 1.0, &mut rng);
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn shape(rng: &mut ChaCha8Rng) -> [usize; 2] {
    [rng.random_range(1..5), rng.random_range(1..6)]
}

fn check_unary(name: &str, f: impl Fn(&mut Tape<'_, f64>, Var) -> Result<Var>) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    for trial in 0..5 {
        let x: Tensor64 = Tensor::randn(shape(&mut rng), 1.0, &mut rng);
        let err = grad_check(&x, EPS, |tape, v| {
            let y = f(tape, v)?;
            project(tape, y, trial)
        })
        .unwrap();
        assert!(err < TOL, "{name}: relative error {err}");
    }
}

#[test]
fn linear_function_is_exact() {
    let x: Tensor64 = Tensor::from_f64([3], &[1.0, 2.0, 3.0]).unwrap();
    let err = grad_check(&x, EPS, |tape, v| {
        let s = tape.scale(v, 3.0);
        Ok(tape.sum(s))
    })
    .unwrap();
    assert!(err <= 1e-10, "{err}");
    assert!(grad_check(&x, 0.0, |tape, v| Ok(tape.sum(v))).is_err());
}

#[test]
fn elementwise_ops() {
    check_unary("relu", |t, v| Ok(t.relu(v)));
    check_unary("gelu", |t, v| Ok(t.gelu(v)));
    check_unary("tanh", |t, v| Ok(t.tanh(v)));
    check_unary("sigmoid", |t, v| Ok(t.sigmoid(v)));
    check_unary("scale", |t, v| Ok(t.scale(v, -1.7)));
    check_unary("square", |t, v| t.mul(v, v));
    check_unary("self_add", |t, v| t.add(v, v));
    check_unary("self_sub", |t, v| {
        let s = t.scale(v, 2.0);
        t.sub(v, s)
    });
    check_unary("mean", |t, v| Ok(t.mean(v)));
    check_unary("transpose", |t, v| t.transpose(v));
    check_unary("reshape", |t, v| {
        let n = t.value(v).numel();
        t.reshape(v, [n])
    });
}

#[test]
fn broadcast_add_and_mul() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..5 {
        let [r, c] = shape(&mut rng);
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::randn([r, c], 1.0, &mut rng));
        let b = store.add("b", Tensor::randn([c], 1.0, &mut rng));
        let report = grad_check_params(&mut store, EPS, None, 0, |tape| {
            let (av, bv) = (tape.param(a), tape.param(b));
            let s = tape.add(av, bv)?;
            let m = tape.mul(s, bv)?;
            let d = tape.sub(m, bv)?;
            project(tape, d, trial)
        })
        .unwrap();
        assert!(report.max_relative_error < TOL, "{report:?}");
    }
}

#[test]
fn matmul_with_transposes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::randn(if ta { [k, m] } else { [m, k] }, 1.0, &mut rng));
        let b = store.add("b", Tensor::randn(if tb { [n, k] } else { [k, n] }, 1.0, &mut rng));
        let report = grad_check_params(&mut store, EPS, None, 0, |tape| {
            let (av, bv) = (tape.param(a), tape.param(b));
            let c = tape.matmul_t(av, bv, ta, tb)?;
            project(tape, c, 1)
        })
        .unwrap();
        assert!(report.max_relative_error < TOL, "{ta} {tb}: {report:?}");
    }
}

#[test]
fn softmax_every_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for axis in 0..3 {
        let x: Tensor64 = Tensor::randn([2, 3, 4], 1.0, &mut rng);
        let err = grad_check(&x, EPS, |tape, v| {
            let y = tape.softmax(v, axis)?;
            project(tape, y, axis as u64)
        })
        .unwrap();
        assert!(err < TOL, "axis {axis}: {err}");
    }
}

#[test]
fn layer_norm_all_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::randn([3, 6], 1.0, &mut rng));
    let g = store.add("g", Tensor::randn([6], 1.0, &mut rng));
    let b = store.add("b", Tensor::randn([6], 1.0, &mut rng));
    let report = grad_check_params(&mut store, EPS, None, 0, |tape| {
        let (xv, gv, bv) = (tape.param(x), tape.param(g), tape.param(b));
        let y = tape.layer_norm(xv, gv, bv, 1e-5)?;
        project(tape, y, 3)
    })
    .unwrap();
    assert!(report.max_relative_error < TOL, "{report:?}");
}

#[test]
fn embedding_concat_narrow_masked_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let table = store.add("table", Tensor::randn([6, 4], 1.0, &mut rng));
    let other = store.add("other", Tensor::randn([3, 2], 1.0, &mut rng));
    let mask: Vec<bool> = (0..18).map(|i| i % 4 == 1).collect();
    let report = grad_check_params(&mut store, EPS, None, 0, |tape| {
        let t = tape.param(table);
        let e = tape.embedding(t, &[1, 4, 1])?;
        let o = tape.param(other);
        let c = tape.concat(&[e, o], 1)?;
        let rows = tape.concat(&[c, c], 0)?;
        let n = tape.narrow(rows, 0, 1, 3)?;
        let n = tape.narrow(n, 1, 1, 4)?;
        let m = tape.masked_fill(c, &mask, -3.0)?;
        let pm = project(tape, m, 1)?;
        let pn = project(tape, n, 2)?;
        tape.add(pm, pn)
    })
    .unwrap();
    assert!(report.max_relative_error < TOL, "{report:?}");
}

#[test]
fn cross_entropy_both_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for reduction in [Reduction::Mean, Reduction::Sum] {
        let x: Tensor64 = Tensor::randn([4, 5], 1.0, &mut rng);
        let err = grad_check(&x, EPS, |tape, v| {
            tape.cross_entropy(v, &[1, 0, 4, 2], Some(0), reduction)
        })
        .unwrap();
        assert!(err < TOL, "{reduction:?}: {err}");
    }
}

#[test]
fn single_attention_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (t, d) = (4, 6);
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::randn([t, d], 1.0, &mut rng));
    let wq = store.add("wq", Tensor::randn([d, d], 0.5, &mut rng));
    let wk = store.add("wk", Tensor::randn([d, d], 0.5, &mut rng));
    let wv = store.add("wv", Tensor::randn([d, d], 0.5, &mut rng));
    let causal: Vec<bool> = (0..t * t).map(|i| i % t > i / t).collect();
    let report = grad_check_params(&mut store, EPS, None, 0, |tape| {
        let xv = tape.param(x);
        let (q, k, v) = (tape.param(wq), tape.param(wk), tape.param(wv));
        let q = tape.matmul(xv, q)?;
        let k = tape.matmul(xv, k)?;
        let v = tape.matmul(xv, v)?;
        let s = tape.matmul_t(q, k, false, true)?;
        let s = tape.scale(s, 1.0 / (d as f64).sqrt());
        let s = tape.masked_fill(s, &causal, -1e9)?;
        let a = tape.softmax(s, 1)?;
        let o = tape.matmul(a, v)?;
        project(tape, o, 5)
    })
    .unwrap();
    assert!(report.max_relative_error < TOL, "{report:?}");
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
}
