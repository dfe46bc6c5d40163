//! Minimal differentiable kernel: tensors, parameters, a reverse-mode tape,
//! the layers the encoder is built from, Adam, and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use graph::{softmax_masked, Activation, Gradients, Graph, Var};
pub use layers::{bigru, dense, dropout, GruParams};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

use rand::Rng;

use crate::error::Result;

/// Glorot-uniform initialization for a `[fan_in, fan_out]` matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let (fan_in, fan_out) = match shape {
        [a, b] => (*a, *b),
        [a] => (*a, 1),
        _ => (shape.iter().product(), 1),
    };
    let limit = crate::math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape.into(), data).expect("glorot shape")
}

pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.into(), data).expect("uniform shape")
}

/// Standalone softmax over a vector.
pub fn softmax(v: &[f64], mask: Option<&[bool]>) -> Result<alloc::vec::Vec<f64>> {
    softmax_masked(v, mask)
}

#[cfg(test)]
mod tests;
