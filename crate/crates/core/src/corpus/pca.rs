//! Principal component analysis by symmetric eigendecomposition.
//!
//! Uses the `dim × dim` covariance when there are at least as many samples
//! as dimensions and the `n × n` Gram matrix otherwise.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `out_dim` orthonormal rows of length `in_dim`; all-zero rows are padding.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

/// Relative eigenvalue floor below which a direction counts as absent.
const RANK_TOL: f64 = 1e-10;

impl PcaProjection {
    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, w) in self.components.iter().zip(z) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += w * ci;
            }
        }
        out
    }

    pub fn explained_fraction(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }
}

/// Fits `out_dim` principal axes; fails when the centered data has lower rank.
pub fn fit_pca(vectors: &[Vec<f64>], out_dim: usize) -> Result<PcaProjection> {
    let (pca, rank) = fit_inner(vectors, out_dim)?;
    if rank < out_dim {
        return Err(Error::Rank {
            needed: out_dim,
            found: rank,
        });
    }
    Ok(pca)
}

/// Like [`fit_pca`], but pads missing directions with zero components.
/// Returns the number of genuine components alongside the projection.
pub fn fit_pca_padded(vectors: &[Vec<f64>], out_dim: usize) -> Result<(PcaProjection, usize)> {
    fit_inner(vectors, out_dim)
}

fn fit_inner(vectors: &[Vec<f64>], out_dim: usize) -> Result<(PcaProjection, usize)> {
    let n = vectors.len();
    if n == 0 || out_dim == 0 {
        return Err(Error::Config("PCA needs at least one vector and one component".into()));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape {
            op: "pca",
            detail: "input vectors have different lengths".into(),
        });
    }
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
    let denom = (n.max(2) - 1) as f64;

    let total_variance = centered.iter().map(|x| x * x).sum::<f64>() / denom;
    let (values, axes): (Vec<f64>, Vec<Vec<f64>>) = if n >= dim {
        let cov = centered.transpose() * &centered / denom;
        let eig = cov.symmetric_eigen();
        let order = descending(eig.eigenvalues.as_slice());
        order
            .iter()
            .map(|&k| {
                let axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                (eig.eigenvalues[k], axis)
            })
            .unzip()
    } else {
        let gram = &centered * centered.transpose() / denom;
        let eig = gram.symmetric_eigen();
        let order = descending(eig.eigenvalues.as_slice());
        order
            .iter()
            .map(|&k| {
                let lambda = eig.eigenvalues[k];
                // axis ∝ Xcᵀ v
                let v = eig.eigenvectors.column(k);
                let mut axis: Vec<f64> = (0..dim)
                    .map(|j| (0..n).map(|i| centered[(i, j)] * v[i]).sum())
                    .collect();
                let norm = math::sqrt(axis.iter().map(|x| x * x).sum());
                if norm > 0.0 {
                    for a in &mut axis {
                        *a /= norm;
                    }
                }
                (lambda, axis)
            })
            .unzip()
    };

    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = (top * RANK_TOL).max(f64::MIN_POSITIVE);
    let rank = values.iter().take_while(|&&v| v > floor).count();

    let mut components = Vec::with_capacity(out_dim);
    let mut explained = Vec::with_capacity(out_dim);
    for k in 0..out_dim {
        if k < rank {
            let mut axis = axes[k].clone();
            // sign convention: largest-magnitude entry positive
            let pivot = axis
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if math::abs(x) > math::abs(best) { x } else { best });
            if pivot < 0.0 {
                for a in &mut axis {
                    *a = -*a;
                }
            }
            components.push(axis);
            explained.push(values[k]);
        } else {
            components.push(vec![0.0; dim]);
            explained.push(0.0);
        }
    }
    Ok((
        PcaProjection {
            mean,
            components,
            explained_variance: explained,
            total_variance,
        },
        rank.min(out_dim),
    ))
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}
