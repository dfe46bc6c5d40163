use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::graph::{matmul_into, Activation, Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// Eager `act(x·W + b)` for `x: [n, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor, act: Activation) -> Result<Tensor> {
    let (n, input) = (x.rows(), x.cols());
    if w.rank() != 2 || w.shape()[0] != input || b.rank() != 1 || b.len() != w.shape()[1] {
        return Err(Error::Shape {
            op: "dense",
            detail: format!("x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        });
    }
    let out = w.shape()[1];
    let mut y = vec![0.0; n * out];
    matmul_into(x.data(), w.data(), &mut y, n, input, out);
    for (i, v) in y.iter_mut().enumerate() {
        let z = *v + b.data()[i % out];
        *v = match act {
            Activation::Linear => z,
            Activation::Tanh => math::tanh(z),
            Activation::Relu => z.max(0.0),
        };
    }
    let shape = if x.rank() == 1 { vec![out] } else { vec![n, out] };
    Tensor::new(shape, y)
}

/// Inverted-dropout keep mask: zeros with probability `rate`, survivors
/// scaled by `1/(1-rate)`. Returns `None` when dropout is a no-op.
pub fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<Option<Vec<f64>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} must lie in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    ))
}

/// Eager dropout.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, rng: &mut R, training: bool) -> Result<Tensor> {
    match dropout_mask(x.len(), rate, rng, training)? {
        None => Ok(x.clone()),
        Some(mask) => {
            let mut y = x.clone();
            for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                *v *= m;
            }
            Ok(y)
        }
    }
}

/// Dropout on the tape.
pub fn dropout_var<R: Rng + ?Sized>(
    g: &mut Graph,
    x: Var,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<Var> {
    let len = g.value(x).len();
    Ok(match dropout_mask(len, rate, rng, training)? {
        None => x,
        Some(mask) => g.mask_mul(x, mask),
    })
}

/// Parameter handles of one GRU direction. Input and hidden sizes may differ.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    pub w_update: ParamId,
    pub w_reset: ParamId,
    pub w_candidate: ParamId,
    pub u_update: ParamId,
    pub u_reset: ParamId,
    pub u_candidate: ParamId,
    pub b_update: ParamId,
    pub b_reset: ParamId,
    pub b_candidate: ParamId,
}

impl GruParams {
    pub const SUFFIXES: [&'static str; 9] = [
        "w_update",
        "w_reset",
        "w_candidate",
        "u_update",
        "u_reset",
        "u_candidate",
        "b_update",
        "b_reset",
        "b_candidate",
    ];

    /// Registers `prefix.<suffix>` tensors, `W: [input, hidden]`, `U: [hidden, hidden]`.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        mut init: impl FnMut(&[usize]) -> Tensor,
    ) -> Result<Self> {
        let mut ids = Vec::with_capacity(9);
        for (i, suffix) in Self::SUFFIXES.iter().enumerate() {
            let shape: &[usize] = match i {
                0..=2 => &[input, hidden],
                3..=5 => &[hidden, hidden],
                _ => &[hidden],
            };
            let t = if i >= 6 { Tensor::zeros(shape) } else { init(shape) };
            ids.push(store.insert(&format!("{prefix}.{suffix}"), t)?);
        }
        Ok(Self::from_ids(&ids))
    }

    pub fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let ids = Self::SUFFIXES
            .iter()
            .map(|s| store.require(&format!("{prefix}.{s}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_ids(&ids))
    }

    fn from_ids(ids: &[ParamId]) -> Self {
        Self {
            w_update: ids[0],
            w_reset: ids[1],
            w_candidate: ids[2],
            u_update: ids[3],
            u_reset: ids[4],
            u_candidate: ids[5],
            b_update: ids[6],
            b_reset: ids[7],
            b_candidate: ids[8],
        }
    }

    pub fn hidden(&self, store: &ParamStore) -> usize {
        store.value(self.b_update).len()
    }
}

struct GruVars {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
}

impl GruVars {
    fn bind(g: &mut Graph, store: &ParamStore, p: &GruParams) -> Self {
        Self {
            w: [p.w_update, p.w_reset, p.w_candidate].map(|id| g.param(store, id)),
            u: [p.u_update, p.u_reset, p.u_candidate].map(|id| g.param(store, id)),
            b: [p.b_update, p.b_reset, p.b_candidate].map(|id| g.param(store, id)),
        }
    }
}

/// Runs one direction; returns the hidden state at every position in
/// sequence order. Masked positions carry the previous state unchanged.
fn gru_direction(
    g: &mut Graph,
    seq: Var,
    p: &GruVars,
    hidden: usize,
    mask: Option<&[bool]>,
    reverse: bool,
) -> Vec<Var> {
    let len = g.value(seq).rows();
    // input projections for all steps at once
    let proj: Vec<Var> = (0..3).map(|i| g.dense(seq, p.w[i], p.b[i], Activation::Linear)).collect();
    let mut h = g.constant(Tensor::zeros(&[hidden]));
    let mut states = vec![h; len];
    let order: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
    for t in order {
        if mask.is_some_and(|m| !m[t]) {
            states[t] = h;
            continue;
        }
        let xz = g.row(proj[0], t);
        let xr = g.row(proj[1], t);
        let xn = g.row(proj[2], t);
        let hz = g.matmul(h, p.u[0]);
        let hr = g.matmul(h, p.u[1]);
        let z_in = g.add(xz, hz);
        let z = g.sigmoid(z_in);
        let r_in = g.add(xr, hr);
        let r = g.sigmoid(r_in);
        let rh = g.mul(r, h);
        let rhu = g.matmul(rh, p.u[2]);
        let n_in = g.add(xn, rhu);
        let n = g.tanh(n_in);
        // h' = (1 - z)·n + z·h = n + z·(h - n)
        let diff = g.sub(h, n);
        let gated = g.mul(z, diff);
        h = g.add(n, gated);
        states[t] = h;
    }
    states
}

/// Bidirectional GRU over `seq: [L, input]`; returns annotations `[L, 2·hidden]`
/// with the left-to-right state first.
pub fn bigru(
    g: &mut Graph,
    store: &ParamStore,
    seq: Var,
    forward: &GruParams,
    backward: &GruParams,
    mask: Option<&[bool]>,
) -> Result<Var> {
    let (len, input) = (g.value(seq).rows(), g.value(seq).cols());
    if len == 0 || g.value(seq).rank() != 2 {
        return Err(Error::Shape {
            op: "bigru",
            detail: format!("expected a non-empty [L, d] sequence, got {:?}", g.value(seq).shape()),
        });
    }
    if store.value(forward.w_update).shape()[0] != input {
        return Err(Error::Shape {
            op: "bigru",
            detail: format!(
                "input width {input} vs weight {:?}",
                store.value(forward.w_update).shape()
            ),
        });
    }
    let hidden = forward.hidden(store);
    let fv = GruVars::bind(g, store, forward);
    let bv = GruVars::bind(g, store, backward);
    let fwd = gru_direction(g, seq, &fv, hidden, mask, false);
    let bwd = gru_direction(g, seq, &bv, hidden, mask, true);
    let rows: Vec<Var> = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| g.concat(&[f, b]))
        .collect();
    Ok(g.stack_rows(&rows))
}
