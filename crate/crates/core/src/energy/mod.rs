//! Siamese and triplet energies, their loss functionals, and training.

pub mod train;


use alloc::format;

use serde::{Deserialize, Serialize};

pub use train::{
    check_loss_gradients, evaluate_loss, train, EpochStats, TrainConfig, TrainOutcome, TrainReport, TrainingSet,
};

use crate::error::{Error, Result};
use crate::math;
use crate::nn::{Graph, Var};
use crate::sampling::MetaArchitecture;

/// Loss configuration. The meta-architecture fixes the distance: Manhattan
/// for siamese pairs, Euclidean for triplets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub meta: MetaArchitecture,
    /// Replace the normalized-energy triplet loss by the hinge
    /// `relu(E_pa − E_an + m)`. Triplet mode only.
    #[serde(default)]
    pub margin: Option<f64>,
}

impl EnergyConfig {
    pub fn siamese() -> Self {
        Self {
            meta: MetaArchitecture::Siamese,
            margin: None,
        }
    }

    pub fn triplet() -> Self {
        Self {
            meta: MetaArchitecture::Triplet,
            margin: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.meta, self.margin) {
            (_, None) => Ok(()),
            (MetaArchitecture::Siamese, Some(_)) => {
                Err(Error::Config("the margin loss is only defined for triplets".into()))
            }
            (MetaArchitecture::Triplet, Some(m)) if !(m > 0.0 && m.is_finite()) => {
                Err(Error::Config(format!("margin must be positive, got {m}")))
            }
            _ => Ok(()),
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op: "energy",
            detail: format!("embedding dims {} and {}", a.len(), b.len()),
        });
    }
    Ok(())
}

/// `1 − exp(−‖gx − gy‖₁)`, in `[0, 1)`.
pub fn siamese_energy(gx: &[f64], gy: &[f64]) -> Result<f64> {
    check_dims(gx, gy)?;
    Ok(1.0 - math::exp(-math::l1(gx, gy)))
}

/// `‖gx − gy‖₂`.
pub fn triplet_energy(gx: &[f64], gy: &[f64]) -> Result<f64> {
    check_dims(gx, gy)?;
    Ok(math::l2(gx, gy))
}

/// Mean of `(E − C)²` over `(energy, target)` pairs.
pub fn siamese_loss(batch: &[(f64, f64)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("siamese loss of an empty batch".into()));
    }
    Ok(batch.iter().map(|(e, c)| (e - c) * (e - c)).sum::<f64>() / batch.len() as f64)
}

/// Softmax-normalized energies `(ne+, ne−)` of one triplet.
pub fn normalized_energies(e_pa: f64, e_an: f64) -> (f64, f64) {
    let pos = math::sigmoid(e_pa - e_an);
    (pos, 1.0 - pos)
}

/// `((ne+ − 0)² + (ne− − 1)²) / 2` for one triplet.
pub fn triplet_loss(e_pa: f64, e_an: f64) -> f64 {
    let (pos, neg) = normalized_energies(e_pa, e_an);
    (pos * pos + (neg - 1.0) * (neg - 1.0)) / 2.0
}

/// Mean triplet loss over `(E_pa, E_an)` pairs.
pub fn triplet_batch_loss(batch: &[(f64, f64)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("triplet loss of an empty batch".into()));
    }
    Ok(batch.iter().map(|&(p, n)| triplet_loss(p, n)).sum::<f64>() / batch.len() as f64)
}

/// Mean of `relu(E_pa − E_an + m)`.
pub fn margin_triplet_loss(batch: &[(f64, f64)], margin: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("margin loss of an empty batch".into()));
    }
    if !(margin > 0.0) {
        return Err(Error::Config(format!("margin must be positive, got {margin}")));
    }
    Ok(batch.iter().map(|&(p, n)| (p - n + margin).max(0.0)).sum::<f64>() / batch.len() as f64)
}

/// Tape version of [`siamese_energy`].
pub fn siamese_energy_var(g: &mut Graph, gx: Var, gy: Var) -> Var {
    let diff = g.sub(gx, gy);
    let abs = g.abs(diff);
    let l1 = g.sum(abs);
    let neg = g.scale(l1, -1.0);
    let decay = g.exp(neg);
    let flipped = g.scale(decay, -1.0);
    g.offset(flipped, 1.0)
}

/// Tape version of [`triplet_energy`].
pub fn triplet_energy_var(g: &mut Graph, gx: Var, gy: Var) -> Var {
    let diff = g.sub(gx, gy);
    g.norm2(diff)
}

/// Squared error of one pair on the tape.
pub fn siamese_loss_var(g: &mut Graph, energy: Var, target: f64) -> Var {
    let diff = g.offset(energy, -target);
    g.mul(diff, diff)
}

/// Normalized-energy loss of one triplet on the tape; equals `ne+²`.
pub fn triplet_loss_var(g: &mut Graph, e_pa: Var, e_an: Var) -> Var {
    let gap = g.sub(e_pa, e_an);
    let pos = g.sigmoid(gap);
    g.mul(pos, pos)
}

/// Hinge loss of one triplet on the tape.
pub fn margin_loss_var(g: &mut Graph, e_pa: Var, e_an: Var, margin: f64) -> Var {
    let gap = g.sub(e_pa, e_an);
    let shifted = g.offset(gap, margin);
    g.relu(shifted)
}
