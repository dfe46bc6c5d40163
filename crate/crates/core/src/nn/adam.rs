use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moments for every parameter of one store.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = |e: &super::params::ParamEntry| Tensor::zeros(e.value.shape());
        Self {
            config,
            step: 0,
            first: store.iter().map(zeros).collect(),
            second: store.iter().map(zeros).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Every parameter must carry a gradient;
/// gradients are cleared afterwards.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.first.len() != store.len() {
        return Err(Error::Config("optimizer state was built for a different store".into()));
    }
    if let Some(id) = store.ids().find(|&id| store.grad(id).is_none()) {
        return Err(Error::MissingGradient(store.name(id).to_string()));
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as f64;
    let c1 = 1.0 - math::powf(beta1, t);
    let c2 = 1.0 - math::powf(beta2, t);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let grad = store.grad(id).expect("checked above").clone();
        let m = state.first[id.index()].data_mut();
        let v = state.second[id.index()].data_mut();
        let p = store.value_mut(id).data_mut();
        for i in 0..p.len() {
            let gi = grad.data()[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (math::sqrt(v_hat) + epsilon);
        }
    }
    store.clear_grads();
    Ok(())
}
