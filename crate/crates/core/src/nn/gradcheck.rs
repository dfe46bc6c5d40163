//! Central-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    math::abs(analytic - numeric) / math::abs(analytic).max(math::abs(numeric)).max(1e-8)
}

/// Compares the gradients that `loss` writes into the store against central
/// differences with step `eps`.
///
/// `loss` must evaluate the objective at the store's current values and
/// accumulate its analytic gradient into the store's gradient slots.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    store.clear_grads();
    let base = loss(store)?;
    let analytic: Vec<Option<Tensor>> = store.ids().map(|id| store.grad(id).cloned()).collect();
    store.clear_grads();
    let again = loss(store)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic);
    }
    check_against(store, eps, &analytic, &mut loss)
}

/// Like [`grad_check`] but with caller-supplied analytic gradients.
pub fn check_against<F>(
    store: &mut ParamStore,
    eps: f64,
    analytic: &[Option<Tensor>],
    loss: &mut F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    let ids: Vec<_> = store.ids().collect();
    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let n = store.value(id).len();
        let mut worst = ParamCheck {
            name: store.name(id).into(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..n {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + eps;
            let plus = loss(store)?;
            store.value_mut(id).data_mut()[i] = orig - eps;
            let minus = loss(store)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id.index()].as_ref().map_or(0.0, |g| g.data()[i]);
            let err = relative_error(a, numeric);
            if err > worst.max_rel_err || i == 0 {
                worst.max_rel_err = err;
                worst.worst_index = i;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        params.push(worst);
    }
    store.clear_grads();
    Ok(GradCheckReport { params })
}
