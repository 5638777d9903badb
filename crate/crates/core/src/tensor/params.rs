use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tape::Gradients;
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor registered in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry<F> {
    name: String,
    group: String,
    tensor: Tensor<F>,
}

/// Named parameter tensors with group labels and freeze flags.
///
/// A parameter is trainable exactly when its tensor requires grad.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F = f32> {
    entries: Vec<Entry<F>>,
    by_name: BTreeMap<String, ParamId>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        group: impl Into<String>,
        mut tensor: Tensor<F>,
        frozen: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter `{name}`")));
        }
        if !tensor.is_finite() {
            return Err(Error::NonFinite {
                op: format!("param {name}"),
            });
        }
        tensor.set_requires_grad(!frozen);
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id);
        self.entries.push(Entry {
            name,
            group: group.into(),
            tensor,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn group(&self, id: ParamId) -> &str {
        &self.entries[id.0].group
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        !self.entries[id.0].tensor.requires_grad()
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.0].tensor.set_requires_grad(!frozen);
    }

    /// Sets the freeze flag on every parameter of `group`; returns how many matched.
    pub fn set_group_frozen(&mut self, group: &str, frozen: bool) -> usize {
        let mut hits = 0;
        for e in self.entries.iter_mut().filter(|e| e.group == group) {
            e.tensor.set_requires_grad(!frozen);
            hits += 1;
        }
        hits
    }

    pub fn groups(&self) -> Vec<String> {
        let mut gs: Vec<String> = self.entries.iter().map(|e| e.group.clone()).collect();
        gs.sort();
        gs.dedup();
        gs
    }

    pub fn trainable(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|&id| !self.is_frozen(id))
    }

    pub fn trainable_scalars(&self) -> usize {
        self.trainable().map(|id| self.get(id).numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|e| e.tensor.zero_grad());
    }

    /// Adds gradients from one backward pass into the stored buffers.
    pub fn accumulate(&mut self, grads: &Gradients<F>) -> Result<()> {
        for (id, g) in grads.iter() {
            let e = &mut self.entries[id.0];
            let Some(buf) = e.tensor.grad_mut() else {
                continue;
            };
            if buf.len() != g.len() {
                return Err(Error::Shape {
                    op: "accumulate",
                    lhs: vec![buf.len()],
                    rhs: vec![g.len()],
                });
            }
            buf.iter_mut().zip(g).for_each(|(b, &v)| *b += v);
        }
        Ok(())
    }

    /// Euclidean norm over all trainable gradient buffers.
    pub fn grad_norm(&self) -> F {
        self.entries
            .iter()
            .filter_map(|e| e.tensor.grad())
            .flat_map(|g| g.iter())
            .map(|&v| v * v)
            .sum::<F>()
            .sqrt()
    }

    /// Scales gradients so their global norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: F) -> F {
        let norm = self.grad_norm();
        if norm > max_norm && norm > F::zero() {
            let s = max_norm / norm;
            for e in &mut self.entries {
                if let Some(g) = e.tensor.grad_mut() {
                    g.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        norm
    }

    /// Same parameters in another precision, preserving names, groups and freeze flags.
    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            out.add(
                e.name.clone(),
                e.group.clone(),
                e.tensor.cast(),
                !e.tensor.requires_grad(),
            )
            .expect("cast preserves a valid store");
        }
        out
    }

    /// Copies values from `other` for every name present in both stores.
    pub fn load_values<G: Real>(&mut self, other: &ParamStore<G>) -> Result<usize> {
        let mut n = 0;
        for e in &mut self.entries {
            if let Some(src) = other.id(&e.name) {
                let src = other.get(src);
                if src.dims() != e.tensor.dims() {
                    return Err(Error::Shape {
                        op: "load_values",
                        lhs: e.tensor.dims().to_vec(),
                        rhs: src.dims().to_vec(),
                    });
                }
                for (d, s) in e.tensor.data_mut().iter_mut().zip(src.data()) {
                    *d = F::of(s.as_f64());
                }
                n += 1;
            }
        }
        Ok(n)
    }
}

/// Seeded initializers. Values are drawn in `f64` so stores built at either
/// precision from the same seed agree up to rounding.
pub mod init {
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    use crate::tensor::{Real, Tensor};

    pub fn normal<F: Real>(dims: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<F> {
        let dist = Normal::new(0.0, std).expect("std is finite and positive");
        Tensor::from_fn(dims.to_vec(), |_| F::of(dist.sample(rng)))
    }

    /// Normal with std `1/sqrt(fan_in)`.
    pub fn fan_in<F: Real>(dims: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<F> {
        normal(dims, 1.0 / (fan_in.max(1) as f64).sqrt(), rng)
    }

    pub fn zeros<F: Real>(dims: &[usize]) -> Tensor<F> {
        Tensor::zeros(dims.to_vec())
    }

    pub fn ones<F: Real>(dims: &[usize]) -> Tensor<F> {
        Tensor::full(dims.to_vec(), F::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::<f32>::new();
        s.add("w", "g", Tensor::zeros([2]), false).unwrap();
        assert!(s.add("w", "g", Tensor::zeros([2]), false).is_err());
    }

    #[test]
    fn group_freeze_toggles_grad() {
        let mut s = ParamStore::<f32>::new();
        let a = s.add("a", "base", Tensor::zeros([2]), false).unwrap();
        let b = s.add("b", "adapter", Tensor::zeros([2]), false).unwrap();
        assert_eq!(s.set_group_frozen("base", true), 1);
        assert!(s.is_frozen(a));
        assert!(!s.is_frozen(b));
        assert_eq!(s.trainable().collect::<Vec<_>>(), vec![b]);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut s = ParamStore::<f64>::new();
        let a = s.add("a", "g", Tensor::zeros([2]), false).unwrap();
        s.get_mut(a).grad_mut().unwrap().copy_from_slice(&[3.0, 4.0]);
        let before = s.clip_grad_norm(1.0);
        assert_eq!(before, 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-15);
    }
}
