use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// `None` until a backward pass populates it; cleared again by the optimizer.
    pub grad: Option<Tensor>,
}

/// Named trainable tensors, iterated in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.into(),
            value,
            grad: None,
        });
        self.index.insert(name.into(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.entries[id.0].grad.as_ref()
    }

    /// Adds `delta` into the gradient slot, creating it if empty.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &[f64]) {
        let entry = &mut self.entries[id.0];
        let slot = entry
            .grad
            .get_or_insert_with(|| Tensor::zeros(entry.value.shape()));
        for (g, d) in slot.data_mut().iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Marks the gradient as populated (zero) without changing an existing value.
    pub fn touch_grad(&mut self, id: ParamId) {
        let entry = &mut self.entries[id.0];
        if entry.grad.is_none() {
            entry.grad = Some(Tensor::zeros(entry.value.shape()));
        }
    }

    pub fn set_grad(&mut self, id: ParamId, grad: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if grad.shape() != entry.value.shape() {
            return Err(Error::Shape {
                op: "set_grad",
                detail: format!(
                    "`{}`: gradient {:?} vs parameter {:?}",
                    entry.name,
                    grad.shape(),
                    entry.value.shape()
                ),
            });
        }
        entry.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for e in &mut self.entries {
            e.grad = None;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// True when both stores hold identical names, shapes and bits.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape() == b.value.shape()
                    && a.value
                        .data()
                        .iter()
                        .zip(b.value.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
