//! Reverse-mode tape over the handful of tensor ops the encoder needs.
//!
//! Every node owns its forward value. `backward` walks the tape once in
//! reverse and returns per-node gradients; parameter leaves can then be
//! flushed into a [`ParamStore`].

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// Node handle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Ln,
    Softplus,
    Abs,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    AddRow(Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    Offset(Var),
    Sum(Var),
    SumRows(Var),
    Softmax(Var, Option<Box<[bool]>>),
    Norm2(Var),
    MaskMul(Var, Box<[f64]>),
    Row(Var, usize),
    Concat(Box<[Var]>),
    StackRows(Box<[Var]>),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: BTreeMap<ParamId, Var>,
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

fn shape_panic(op: &str, a: &[usize], b: &[usize]) -> ! {
    panic!("shape mismatch in {op}: {a:?} vs {b:?}")
}

/// `(rows, inner)` view of a matmul operand.
fn mm_dims(lhs: &[usize], rhs: &[usize]) -> (usize, usize, usize) {
    let (n, k) = match lhs.len() {
        1 => (1, lhs[0]),
        2 => (lhs[0], lhs[1]),
        _ => shape_panic("matmul", lhs, rhs),
    };
    let (k2, m) = match rhs.len() {
        1 => (rhs[0], 1),
        2 => (rhs[0], rhs[1]),
        _ => shape_panic("matmul", lhs, rhs),
    };
    if k != k2 {
        shape_panic("matmul", lhs, rhs);
    }
    (n, k, m)
}

fn mm_out_shape(lhs: &[usize], rhs: &[usize], n: usize, m: usize) -> Vec<usize> {
    match (lhs.len(), rhs.len()) {
        (1, 1) => vec![1],
        (1, _) => vec![m],
        (_, 1) => vec![n],
        _ => vec![n, m],
    }
}

/// `c += a (n×k) · b (k×m)`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let crow = &mut c[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn broadcast_shape(op: &str, a: &Tensor, b: &Tensor) -> Vec<usize> {
    if a.shape() == b.shape() || b.len() == 1 {
        a.shape().to_vec()
    } else if a.len() == 1 {
        b.shape().to_vec()
    } else {
        shape_panic(op, a.shape(), b.shape())
    }
}

/// Masked softmax with max-subtraction. Masked positions are exactly zero.
pub fn softmax_masked(v: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    if let Some(m) = mask {
        if m.len() != v.len() {
            return Err(Error::Shape {
                op: "softmax",
                detail: format!("mask length {} vs input length {}", m.len(), v.len()),
            });
        }
    }
    if !(0..v.len()).any(live) {
        return Err(Error::EmptyAttentionSupport);
    }
    let max = (0..v.len())
        .filter(|&i| live(i))
        .map(|i| v[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = (0..v.len())
        .map(|i| if live(i) { math::exp(v[i] - max) } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for x in &mut out {
        *x /= total;
    }
    Ok(out)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Binds a parameter as a leaf. Binding the same parameter twice returns
    /// the same node, so every use shares one gradient accumulator.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let (n, k, m) = mm_dims(sa, sb);
        let shape = mm_out_shape(sa, sb, n, m);
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        self.push(Tensor::new(shape, out).expect("matmul shape"), Op::MatMul(a, b))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape("elementwise", ta, tb);
        let n: usize = shape.iter().product();
        let pick = |t: &Tensor, i: usize| if t.len() == 1 { t.data()[0] } else { t.data()[i] };
        let data = (0..n)
            .map(|i| {
                let (x, y) = (pick(ta, i), pick(tb, i));
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                }
            })
            .collect();
        let t = Tensor::new(shape, data).expect("binary shape");
        self.push(t, Op::Binary(kind, a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Div, a, b)
    }

    /// Adds a `[m]` bias to every row of an `[n, m]` matrix (or to an `[m]` vector).
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.rank() != 1 || tx.cols() != tb.len() {
            shape_panic("add_row", tx.shape(), tb.shape());
        }
        let m = tb.len();
        let mut out = tx.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tb.data()[i % m];
        }
        self.push(out, Op::AddRow(x, bias))
    }

    fn unary(&mut self, kind: Unary, x: Var) -> Var {
        let f = match kind {
            Unary::Tanh => math::tanh,
            Unary::Sigmoid => math::sigmoid,
            Unary::Relu => |v: f64| v.max(0.0),
            Unary::Exp => math::exp,
            Unary::Ln => math::ln,
            Unary::Softplus => math::softplus,
            Unary::Abs => math::abs,
        };
        let t = self.value(x).map(f);
        self.push(t, Op::Unary(kind, x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(Unary::Ln, x)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(Unary::Softplus, x)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(Unary::Abs, x)
    }

    pub fn activate(&mut self, x: Var, act: Activation) -> Var {
        match act {
            Activation::Linear => x,
            Activation::Tanh => self.tanh(x),
            Activation::Relu => self.relu(x),
        }
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s))
    }

    /// `x + c` for a constant `c`.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x).map(|v| v + c);
        self.push(t, Op::Offset(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Column sums of an `[n, m]` matrix → `[m]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.cols();
        let mut out = vec![0.0; m];
        for (i, v) in t.data().iter().enumerate() {
            out[i % m] += v;
        }
        self.push(Tensor::vector(out), Op::SumRows(x))
    }

    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 1 {
            return Err(Error::Shape {
                op: "softmax",
                detail: format!("expected a vector, got {:?}", t.shape()),
            });
        }
        let y = softmax_masked(t.data(), mask)?;
        Ok(self.push(
            Tensor::vector(y),
            Op::Softmax(x, mask.map(|m| m.to_vec().into_boxed_slice())),
        ))
    }

    pub fn norm2(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(math::sqrt(s)), Op::Norm2(x))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let t = self.value(x);
        assert_eq!(t.len(), mask.len(), "mask_mul length");
        let mut out = t.clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.push(out, Op::MaskMul(x, mask.into_boxed_slice()))
    }

    pub fn row(&mut self, x: Var, i: usize) -> Var {
        let r = self.value(x).row(i).to_vec();
        self.push(Tensor::vector(r), Op::Row(x, i))
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::vector(out), Op::Concat(parts.into()))
    }

    /// Stacks equal-length vectors into a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows of nothing");
        let m = self.value(rows[0]).len();
        let mut out = Vec::with_capacity(m * rows.len());
        for &r in rows {
            let t = self.value(r);
            if t.len() != m {
                shape_panic("stack_rows", self.value(rows[0]).shape(), t.shape());
            }
            out.extend_from_slice(t.data());
        }
        let t = Tensor::matrix(rows.len(), m, out).expect("stack shape");
        self.push(t, Op::StackRows(rows.into()))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).clone().reshaped(shape).expect("reshape");
        self.push(t, Op::Reshape(x))
    }

    /// `act(x·W + b)`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var, act: Activation) -> Var {
        let xw = self.matmul(x, w);
        let z = self.add_row(xw, b);
        self.activate(z, act)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl Fn(usize) -> f64) {
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            for (i, g) in slot.iter_mut().enumerate() {
                *g += f(i);
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, k, m) = mm_dims(ta.shape(), tb.shape());
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        for p in 0..k {
                            let brow = &tb.data()[p * m..(p + 1) * m];
                            let grow = &gy[i * m..(i + 1) * m];
                            da[i * k + p] = brow.iter().zip(grow).map(|(x, y)| x * y).sum();
                        }
                    }
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        let grow = &gy[i * m..(i + 1) * m];
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (d, g) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += av * g;
                            }
                        }
                    }
                    acc(&mut grads, *a, n * k, |i| da[i]);
                    acc(&mut grads, *b, k * m, |i| db[i]);
                }
                Op::Binary(kind, a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let pick = |t: &Tensor, i: usize| {
                        if t.len() == 1 {
                            t.data()[0]
                        } else {
                            t.data()[i]
                        }
                    };
                    let n = gy.len();
                    let mut ga = vec![0.0; ta.len()];
                    let mut gb = vec![0.0; tb.len()];
                    for i in 0..n {
                        let (x, z) = (pick(ta, i), pick(tb, i));
                        let (dx, dz) = match kind {
                            Binary::Add => (gy[i], gy[i]),
                            Binary::Sub => (gy[i], -gy[i]),
                            Binary::Mul => (gy[i] * z, gy[i] * x),
                            Binary::Div => (gy[i] / z, -gy[i] * x / (z * z)),
                        };
                        ga[if ta.len() == 1 { 0 } else { i }] += dx;
                        gb[if tb.len() == 1 { 0 } else { i }] += dz;
                    }
                    acc(&mut grads, *a, ga.len(), |i| ga[i]);
                    acc(&mut grads, *b, gb.len(), |i| gb[i]);
                }
                Op::AddRow(x, b) => {
                    let m = self.value(*b).len();
                    let mut gbias = vec![0.0; m];
                    for (i, g) in gy.iter().enumerate() {
                        gbias[i % m] += g;
                    }
                    acc(&mut grads, *x, gy.len(), |i| gy[i]);
                    acc(&mut grads, *b, m, |i| gbias[i]);
                }
                Op::Unary(kind, x) => {
                    let tx = self.value(*x).data();
                    let yd = y.data();
                    let d = |i: usize| -> f64 {
                        match kind {
                            Unary::Tanh => 1.0 - yd[i] * yd[i],
                            Unary::Sigmoid => yd[i] * (1.0 - yd[i]),
                            Unary::Relu => {
                                if tx[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Exp => yd[i],
                            Unary::Ln => 1.0 / tx[i],
                            Unary::Softplus => math::sigmoid(tx[i]),
                            Unary::Abs => {
                                if tx[i] > 0.0 {
                                    1.0
                                } else if tx[i] < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                        }
                    };
                    acc(&mut grads, *x, tx.len(), |i| gy[i] * d(i));
                }
                Op::Scale(x, s) => acc(&mut grads, *x, gy.len(), |i| gy[i] * s),
                Op::Offset(x) | Op::Reshape(x) => acc(&mut grads, *x, gy.len(), |i| gy[i]),
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    acc(&mut grads, *x, n, |_| gy[0]);
                }
                Op::SumRows(x) => {
                    let n = self.value(*x).len();
                    let m = gy.len();
                    acc(&mut grads, *x, n, |i| gy[i % m]);
                }
                Op::Softmax(x, mask) => {
                    let yd = y.data();
                    let dot: f64 = yd.iter().zip(&gy).map(|(a, b)| a * b).sum();
                    acc(&mut grads, *x, yd.len(), |i| {
                        if mask.as_ref().is_some_and(|m| !m[i]) {
                            0.0
                        } else {
                            yd[i] * (gy[i] - dot)
                        }
                    });
                }
                Op::Norm2(x) => {
                    let tx = self.value(*x).data();
                    let norm = y.data()[0];
                    acc(&mut grads, *x, tx.len(), |i| {
                        if norm > 0.0 {
                            gy[0] * tx[i] / norm
                        } else {
                            0.0
                        }
                    });
                }
                Op::MaskMul(x, mask) => acc(&mut grads, *x, gy.len(), |i| gy[i] * mask[i]),
                Op::Row(x, r) => {
                    let t = self.value(*x);
                    let m = t.cols();
                    let lo = r * m;
                    acc(&mut grads, *x, t.len(), |i| {
                        if i >= lo && i < lo + m {
                            gy[i - lo]
                        } else {
                            0.0
                        }
                    });
                }
                Op::Concat(parts) | Op::StackRows(parts) => {
                    let mut off = 0;
                    for &p in parts.iter() {
                        let n = self.value(p).len();
                        acc(&mut grads, p, n, |i| gy[off + i]);
                        off += n;
                    }
                }
            }
            grads[idx] = Some(gy);
        }
        Gradients { grads }
    }

    /// Adds the gradients of every bound parameter into `store`. Bound
    /// parameters that received no gradient are still marked populated.
    pub fn accumulate(&self, grads: &Gradients, store: &mut ParamStore) {
        self.accumulate_scaled(grads, store, 1.0);
    }

    pub fn accumulate_scaled(&self, grads: &Gradients, store: &mut ParamStore, scale: f64) {
        for (&id, &v) in &self.bound {
            match grads.get(v) {
                Some(g) if scale == 1.0 => store.accumulate_grad(id, g),
                Some(g) => {
                    let scaled: Vec<f64> = g.iter().map(|x| x * scale).collect();
                    store.accumulate_grad(id, &scaled);
                }
                None => store.touch_grad(id),
            }
        }
    }
}
