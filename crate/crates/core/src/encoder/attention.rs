//! Level-1 content-aware attention and level-2 time-decay attention.

use alloc::vec::Vec;

use crate::error::Result;
use crate::math;
use crate::nn::{Graph, Tensor, Var};

/// Stabilizer added to the time-decay normalizer.
pub const DECAY_EPS: f64 = 1e-8;

/// Raw (unconstrained) time-decay scalars of one side.
///
/// `w_convex`, `w_linear`, `w_concave`, `scale`, `exponent`, `midpoint` and
/// `steepness` pass through softplus before use; `slope` and `intercept`
/// are used as-is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeDecayParams {
    pub w_convex: f64,
    pub w_linear: f64,
    pub w_concave: f64,
    pub scale: f64,
    pub exponent: f64,
    pub slope: f64,
    pub intercept: f64,
    pub midpoint: f64,
    pub steepness: f64,
}

impl TimeDecayParams {
    pub const NAMES: [&'static str; 9] = [
        "w_convex",
        "w_linear",
        "w_concave",
        "scale",
        "exponent",
        "slope",
        "intercept",
        "midpoint",
        "steepness",
    ];

    /// All decay families active and decreasing: softplus⁻¹(1) for the
    /// positive scalars, slope −0.1, intercept 1.
    pub fn initial() -> Self {
        let one = math::softplus_inv(1.0);
        Self {
            w_convex: one,
            w_linear: one,
            w_concave: one,
            scale: one,
            exponent: one,
            slope: -0.1,
            intercept: 1.0,
            midpoint: one,
            steepness: one,
        }
    }

    pub fn from_array(v: [f64; 9]) -> Self {
        Self {
            w_convex: v[0],
            w_linear: v[1],
            w_concave: v[2],
            scale: v[3],
            exponent: v[4],
            slope: v[5],
            intercept: v[6],
            midpoint: v[7],
            steepness: v[8],
        }
    }

    pub fn to_array(self) -> [f64; 9] {
        [
            self.w_convex,
            self.w_linear,
            self.w_concave,
            self.scale,
            self.exponent,
            self.slope,
            self.intercept,
            self.midpoint,
            self.steepness,
        ]
    }

    /// Unnormalized weight at offset `d ≥ 1`.
    pub fn raw_weight(&self, d: f64) -> f64 {
        let sp = math::softplus;
        let convex = sp(self.w_convex) / (sp(self.scale) * math::powf(d, sp(self.exponent)));
        let linear = sp(self.w_linear) * (self.slope * d + self.intercept).max(0.0);
        let concave = sp(self.w_concave) / (1.0 + math::powf(d / sp(self.midpoint), sp(self.steepness)));
        convex + linear + concave
    }
}

/// Normalized time-decay weights `β_c / (Σβ + ε)` for the given offsets.
pub fn time_decay_weights(offsets: &[usize], p: &TimeDecayParams) -> Vec<f64> {
    let raw: Vec<f64> = offsets.iter().map(|&d| p.raw_weight(d as f64)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|b| b / (total + DECAY_EPS)).collect()
}

/// Tape version of [`time_decay_weights`]; `raw` holds the nine scalar
/// parameter nodes in [`TimeDecayParams::NAMES`] order.
pub fn time_decay_var(g: &mut Graph, offsets: &[usize], raw: &[Var; 9]) -> Var {
    let ln_d = g.constant(Tensor::vector(offsets.iter().map(|&d| math::ln(d as f64)).collect()));
    let d = g.constant(Tensor::vector(offsets.iter().map(|&d| d as f64).collect()));
    let sp: Vec<Var> = [0, 1, 2, 3, 4, 7, 8].iter().map(|&i| g.softplus(raw[i])).collect();
    let (w1, w2, w3, a, b, d0, l) = (sp[0], sp[1], sp[2], sp[3], sp[4], sp[5], sp[6]);
    let (e, k) = (raw[5], raw[6]);

    // w1 / (a · d^b)
    let b_ln_d = g.mul(b, ln_d);
    let d_pow_b = g.exp(b_ln_d);
    let denom = g.mul(a, d_pow_b);
    let convex = g.div(w1, denom);
    // w2 · relu(e·d + k)
    let ed = g.mul(e, d);
    let edk = g.add(ed, k);
    let ramp = g.relu(edk);
    let linear = g.mul(w2, ramp);
    // w3 / (1 + (d/D0)^l)
    let ln_d0 = g.ln(d0);
    let log_ratio = g.sub(ln_d, ln_d0);
    let l_log = g.mul(l, log_ratio);
    let ratio_pow = g.exp(l_log);
    let one_plus = g.offset(ratio_pow, 1.0);
    let concave = g.div(w3, one_plus);

    let partial = g.add(convex, linear);
    let beta = g.add(partial, concave);
    let total = g.sum(beta);
    let norm = g.offset(total, DECAY_EPS);
    g.div(beta, norm)
}

/// Handles of the shared content-aware attention parameters.
#[derive(Clone, Copy, Debug)]
pub struct ContentAttentionVars {
    pub w_tokens: Var,
    pub w_current: Var,
    pub bias: Var,
    pub query: Var,
}

/// `W'·Σ current tokens + bias`, shared by every context utterance.
pub fn current_projection(g: &mut Graph, vars: &ContentAttentionVars, current_tokens: Var) -> Var {
    let sum = g.sum_rows(current_tokens);
    let proj = g.matmul(sum, vars.w_current);
    g.add(proj, vars.bias)
}

/// α over the tokens of one context utterance, and the α-weighted sum of
/// those tokens.
pub fn content_aware_attention(
    g: &mut Graph,
    vars: &ContentAttentionVars,
    context_tokens: Var,
    current_proj: Var,
) -> Result<(Var, Var)> {
    let projected = g.matmul(context_tokens, vars.w_tokens);
    let shifted = g.add_row(projected, current_proj);
    let hidden = g.tanh(shifted);
    let scores = g.matmul(hidden, vars.query);
    let alpha = g.softmax(scores, None)?;
    let pooled = g.matmul(alpha, context_tokens);
    Ok((alpha, pooled))
}
