//! The computation tape: forward ops append nodes in topological order and
//! [`Tape::backward`] walks them in reverse once.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Mean over non-ignored targets (0 when all are ignored).
    Mean,
    /// Sum over non-ignored targets.
    Sum,
}

/// `outer x n x inner` decomposition of a shape around one axis.
#[derive(Debug, Clone, Copy)]
struct AxisSplit {
    outer: usize,
    n: usize,
    inner: usize,
}

impl AxisSplit {
    fn new(shape: &[usize], axis: usize) -> Self {
        Self {
            outer: shape[..axis].iter().product(),
            n: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Transpose(Var),
    Reshape(Var),
    Softmax {
        x: Var,
        split: AxisSplit,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Relu(Var),
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Embedding {
        table: Var,
        ids: Vec<u32>,
    },
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        widths: Vec<usize>,
    },
    Narrow {
        x: Var,
        outer: usize,
        width: usize,
        start: usize,
        len: usize,
    },
    MaskedFill {
        x: Var,
        mask: Vec<bool>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<u32>,
        ignore: Option<u32>,
        probs: Vec<T>,
        scale: T,
    },
    Sum(Var),
    Mean(Var),
}

struct Node<T> {
    /// `None` for parameters, whose values live in the store.
    value: Option<Tensor<T>>,
    op: Op<T>,
}

pub struct Tape<'p, T: Scalar> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    train: bool,
    rng: ChaCha8Rng,
}

fn suffix_broadcast(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation; returns (value, derivative)
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(0.044715);
    let half = T::lit(0.5);
    let one = T::one();
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let value = half * x * (one + t);
    let du = c * (one + T::lit(3.0) * k * x * x);
    let grad = half * (one + t) + half * x * (one - t * t) * du;
    (value, grad)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `out = op(a) * op(b)` where op optionally transposes a row-major matrix.
#[allow(clippy::too_many_arguments)]
fn matmul_into<T: Scalar>(
    a: &[T],
    a_rows: usize,
    a_cols: usize,
    ta: bool,
    b: &[T],
    b_rows: usize,
    b_cols: usize,
    tb: bool,
    beta: T,
    out: &mut [T],
) {
    let (m, k) = if ta { (a_cols, a_rows) } else { (a_rows, a_cols) };
    let n = if tb { b_rows } else { b_cols };
    let a_strides = if ta { (1, a_cols as isize) } else { (a_cols as isize, 1) };
    let b_strides = if tb { (1, b_cols as isize) } else { (b_cols as isize, 1) };
    T::gemm(m, k, n, a, a_strides, b, b_strides, beta, out, (n as isize, 1));
}

impl<'p, T: Scalar> Tape<'p, T> {
    /// A tape for inference: dropout is the identity.
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
            train: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// A tape for training; dropout masks come from a generator seeded by `seed`.
    pub fn training(store: &'p ParamStore<T>, seed: u64) -> Self {
        Self {
            train: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ..Self::new(store)
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("only parameter nodes lack a value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant)
    }

    /// The node of a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let id = self.store.id(name)?;
        Ok(self.param(id))
    }

    fn elementwise(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !suffix_broadcast(ta.shape(), tb.shape()) {
            return Err(Error::ShapeMismatch {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let bn = tb.numel().max(1);
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data()[i % bn]))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| x * c).collect()).unwrap();
        self.push(out, Op::Scale(a, c))
    }

    /// 2-D product `op(a) op(b)`, where `ta`/`tb` transpose the operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (k2, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(
            va.data(),
            sa[0],
            sa[1],
            ta,
            vb.data(),
            sb[0],
            sb[1],
            tb,
            T::zero(),
            &mut out,
        );
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMul { a, b, ta, tb }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `x w + b` for `x: [n, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.shape();
        if s.len() != 2 {
            return Err(invalid("transpose", format!("expects a matrix, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data()[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], out)?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<()> {
        let rank = self.shape(a).len();
        if axis >= rank {
            return Err(invalid(op, format!("axis {axis} out of range for rank {rank}")));
        }
        Ok(())
    }

    /// Softmax along `axis`, stabilized by subtracting the maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis("softmax", a, axis)?;
        let t = self.value(a);
        let split = AxisSplit::new(t.shape(), axis);
        let mut out = t.data().to_vec();
        for o in 0..split.outer {
            for i in 0..split.inner {
                let idx = |j: usize| (o * split.n + j) * split.inner + i;
                let max = (0..split.n).map(|j| out[idx(j)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for j in 0..split.n {
                    let e = if max == T::neg_infinity() {
                        T::zero()
                    } else {
                        (out[idx(j)] - max).exp()
                    };
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..split.n {
                    out[idx(j)] = if total > T::zero() {
                        out[idx(j)] / total
                    } else {
                        T::zero()
                    };
                }
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.push(out, Op::Softmax { x: a, split }))
    }

    /// Normalizes over the last axis, then applies `gain` and `bias` (both
    /// shaped like the last axis).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        let d = *t.shape().last().ok_or_else(|| invalid("layer_norm", "scalar input"))?;
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    lhs: t.shape().to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let rows = t.numel() / d.max(1);
        let eps = T::lit(eps);
        let dn = T::from_usize(d).unwrap();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![T::zero(); t.numel()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); t.numel()];
        for r in 0..rows {
            let row = &t.data()[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).unwrap();
        self.push(out, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, |x| gelu_parts(x).0, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, T::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Rows of `table: [vocab, dim]` selected by `ids`, shaped `[ids.len(), dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let t = self.value(table);
        let s = t.shape();
        if s.len() != 2 {
            return Err(invalid("embedding", format!("table must be a matrix, got {s:?}")));
        }
        let (vocab, dim) = (s[0], s[1]);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id as usize >= vocab {
                return Err(invalid("embedding", format!("id {id} outside vocabulary of {vocab}")));
            }
            out.extend_from_slice(t.row(id as usize));
        }
        let out = Tensor::new(vec![ids.len(), dim], out)?;
        Ok(self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            widths.push(AxisSplit::new(s, axis).n * AxisSplit::new(s, axis).inner);
        }
        let outer = AxisSplit::new(&base, axis).outer;
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&v, &w) in inputs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(v).data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base;
        shape[axis] = inputs.iter().map(|&v| self.shape(v)[axis]).sum();
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                widths,
            },
        ))
    }

    /// The slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check_axis("narrow", a, axis)?;
        let t = self.value(a);
        let split = AxisSplit::new(t.shape(), axis);
        if start + len > split.n {
            return Err(invalid(
                "narrow",
                format!("range {start}..{} exceeds axis length {}", start + len, split.n),
            ));
        }
        let width = split.n * split.inner;
        let mut out = Vec::with_capacity(split.outer * len * split.inner);
        for o in 0..split.outer {
            let from = o * width + start * split.inner;
            out.extend_from_slice(&t.data()[from..from + len * split.inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Narrow {
                x: a,
                outer: split.outer,
                width,
                start: start * split.inner,
                len: len * split.inner,
            },
        ))
    }

    /// Replaces entries where `mask` is true by `value`; those entries get
    /// no gradient.
    pub fn masked_fill(&mut self, a: Var, mask: &[bool], value: T) -> Result<Var> {
        let t = self.value(a);
        if mask.len() != t.numel() {
            return Err(Error::ShapeMismatch {
                op: "masked_fill",
                lhs: t.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let data = t
            .data()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { value } else { x })
            .collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(
            out,
            Op::MaskedFill {
                x: a,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Inverted dropout: zeroes entries with probability `p` and scales the
    /// rest by `1 / (1 - p)`. Identity on inference tapes or when `p` is 0.
    pub fn dropout(&mut self, a: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("dropout", format!("probability must lie in [0, 1), got {p}")));
        }
        if !self.train || p == 0.0 {
            return Ok(a);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let n = self.value(a).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| if self.rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let t = self.value(a);
        let data = t.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dropout { x: a, mask }))
    }

    /// Cross entropy of `logits: [n, classes]` against `targets`, skipping
    /// positions equal to `ignore`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[u32],
        ignore: Option<u32>,
        reduction: Reduction,
    ) -> Result<Var> {
        let t = self.value(logits);
        let s = t.shape();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: s.to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let classes = s[1];
        let mut probs = vec![T::zero(); t.numel()];
        let mut total = T::zero();
        let mut count = 0usize;
        for (r, &target) in targets.iter().enumerate() {
            if Some(target) == ignore {
                continue;
            }
            if target as usize >= classes {
                return Err(invalid(
                    "cross_entropy",
                    format!("target {target} outside {classes} classes"),
                ));
            }
            let row = t.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                probs[r * classes + j] = e;
                z += e;
            }
            for j in 0..classes {
                probs[r * classes + j] /= z;
            }
            total += z.ln() + max - row[target as usize];
            count += 1;
        }
        let scale = match reduction {
            Reduction::Sum => T::one(),
            Reduction::Mean if count == 0 => T::zero(),
            Reduction::Mean => T::one() / T::from_usize(count).unwrap(),
        };
        let out = Tensor::scalar(total * scale);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                ignore,
                probs,
                scale,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / T::from_usize(t.numel().max(1)).unwrap());
        self.push(out, Op::Mean(a))
    }

    /// Reverse pass from a one-element `loss`; returns parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));
        let mut out = Gradients::zeros_like(self.store);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backward_node(i, &g, &mut grads, &mut out)?;
        }
        Ok(out)
    }

    fn backward_node(
        &self,
        i: usize,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        params: &mut Gradients<T>,
    ) -> Result<()> {
        let acc = |grads: &mut [Option<Tensor<T>>], v: Var, t: Tensor<T>| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let like = |v: Var, data: Vec<T>| Tensor::new(self.shape(v).to_vec(), data).expect("shape preserved");
        // Gradient of a suffix-broadcast right operand: fold over repeats.
        let fold = |v: Var, full: &[T]| {
            let n = self.value(v).numel().max(1);
            let mut data = vec![T::zero(); n];
            for (k, &x) in full.iter().enumerate() {
                data[k % n] += x;
            }
            like(v, data)
        };
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Constant => {}
            Op::Param(id) => params.accumulate(*id, g),
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, fold(*b, gd));
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                let neg: Vec<T> = gd.iter().map(|&x| -x).collect();
                acc(grads, *b, fold(*b, &neg));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let bn = vb.len().max(1);
                let da: Vec<T> = gd.iter().enumerate().map(|(k, &x)| x * vb[k % bn]).collect();
                let db: Vec<T> = gd.iter().zip(va).map(|(&x, &y)| x * y).collect();
                acc(grads, *a, like(*a, da));
                acc(grads, *b, fold(*b, &db));
            }
            Op::Scale(a, c) => {
                acc(grads, *a, like(*a, gd.iter().map(|&x| x * *c).collect()));
            }
            Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (sa, sb) = (va.shape(), vb.shape());
                let (m, n) = (g.shape()[0], g.shape()[1]);
                let mut da = vec![T::zero(); va.numel()];
                if *ta {
                    // dA = op(B) dC^T
                    matmul_into(vb.data(), sb[0], sb[1], *tb, gd, m, n, true, T::zero(), &mut da);
                } else {
                    // dA = dC op(B)^T
                    matmul_into(gd, m, n, false, vb.data(), sb[0], sb[1], !*tb, T::zero(), &mut da);
                }
                let mut db = vec![T::zero(); vb.numel()];
                if *tb {
                    // dB = dC^T op(A)
                    matmul_into(gd, m, n, true, va.data(), sa[0], sa[1], *ta, T::zero(), &mut db);
                } else {
                    // dB = op(A)^T dC
                    matmul_into(va.data(), sa[0], sa[1], !*ta, gd, m, n, false, T::zero(), &mut db);
                }
                acc(grads, *a, like(*a, da));
                acc(grads, *b, like(*b, db));
            }
            Op::Transpose(a) => {
                let (r, c) = (g.shape()[0], g.shape()[1]);
                let mut d = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] = gd[i * c + j];
                    }
                }
                acc(grads, *a, like(*a, d));
            }
            Op::Reshape(a) => acc(grads, *a, like(*a, gd.to_vec())),
            Op::Softmax { x, split } => {
                let y = self.nodes[i].value.as_ref().unwrap().data();
                let mut d = vec![T::zero(); y.len()];
                for o in 0..split.outer {
                    for k in 0..split.inner {
                        let idx = |j: usize| (o * split.n + j) * split.inner + k;
                        let dot: T = (0..split.n).map(|j| gd[idx(j)] * y[idx(j)]).sum();
                        for j in 0..split.n {
                            d[idx(j)] = y[idx(j)] * (gd[idx(j)] - dot);
                        }
                    }
                }
                acc(grads, *x, like(*x, d));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gain).data();
                let d = gv.len();
                let dn = T::from_usize(d).unwrap();
                let mut dx = vec![T::zero(); xhat.len()];
                let mut dg = vec![T::zero(); d];
                let mut db = vec![T::zero(); d];
                for (r, &is) in inv_std.iter().enumerate() {
                    let row = r * d..(r + 1) * d;
                    let (gy, h) = (&gd[row.clone()], &xhat[row.clone()]);
                    let mut mean_dh = T::zero();
                    let mut mean_dh_h = T::zero();
                    for j in 0..d {
                        let dh = gy[j] * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * h[j];
                        dg[j] += gy[j] * h[j];
                        db[j] += gy[j];
                    }
                    mean_dh /= dn;
                    mean_dh_h /= dn;
                    for j in 0..d {
                        dx[r * d + j] = is * (gy[j] * gv[j] - mean_dh - h[j] * mean_dh_h);
                    }
                }
                acc(grads, *x, like(*x, dx));
                acc(grads, *gain, like(*gain, dg));
                acc(grads, *bias, like(*bias, db));
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                let d = gd
                    .iter()
                    .zip(va)
                    .map(|(&x, &v)| if v > T::zero() { x } else { T::zero() })
                    .collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Gelu(a) => {
                let va = self.value(*a).data();
                let d = gd.iter().zip(va).map(|(&x, &v)| x * gelu_parts(v).1).collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.as_ref().unwrap().data();
                let d = gd.iter().zip(y).map(|(&x, &t)| x * (T::one() - t * t)).collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.as_ref().unwrap().data();
                let d = gd.iter().zip(y).map(|(&x, &s)| x * s * (T::one() - s)).collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Embedding { table, ids } => {
                let s = self.shape(*table);
                let dim = s[1];
                let mut d = vec![T::zero(); s[0] * dim];
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut d[id as usize * dim..(id as usize + 1) * dim];
                    for (x, &y) in dst.iter_mut().zip(&gd[r * dim..(r + 1) * dim]) {
                        *x += y;
                    }
                }
                acc(grads, *table, like(*table, d));
            }
            Op::Concat { inputs, outer, widths } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (&v, &w) in inputs.iter().zip(widths) {
                    let mut d = Vec::with_capacity(outer * w);
                    for o in 0..*outer {
                        d.extend_from_slice(&gd[o * total + offset..o * total + offset + w]);
                    }
                    acc(grads, v, like(v, d));
                    offset += w;
                }
            }
            Op::Narrow {
                x,
                outer,
                width,
                start,
                len,
            } => {
                let mut d = vec![T::zero(); outer * width];
                for o in 0..*outer {
                    d[o * width + start..o * width + start + len].copy_from_slice(&gd[o * len..(o + 1) * len]);
                }
                acc(grads, *x, like(*x, d));
            }
            Op::MaskedFill { x, mask } => {
                let d = gd
                    .iter()
                    .zip(mask)
                    .map(|(&v, &m)| if m { T::zero() } else { v })
                    .collect();
                acc(grads, *x, like(*x, d));
            }
            Op::Dropout { x, mask } => {
                let d = gd.iter().zip(mask).map(|(&v, &m)| v * m).collect();
                acc(grads, *x, like(*x, d));
            }
            Op::CrossEntropy {
                logits,
                targets,
                ignore,
                probs,
                scale,
            } => {
                let classes = self.shape(*logits)[1];
                let upstream = gd[0] * *scale;
                let mut d = vec![T::zero(); probs.len()];
                for (r, &target) in targets.iter().enumerate() {
                    if Some(target) == *ignore {
                        continue;
                    }
                    for j in 0..classes {
                        d[r * classes + j] = probs[r * classes + j] * upstream;
                    }
                    d[r * classes + target as usize] -= upstream;
                }
                acc(grads, *logits, like(*logits, d));
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                acc(grads, *a, like(*a, vec![gd[0]; n]));
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                let v = gd[0] / T::from_usize(n.max(1)).unwrap();
                acc(grads, *a, like(*a, vec![v; n]));
            }
        }
        Ok(())
    }
}
