use indexmap::IndexMap;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Result, VeError};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Ordered collection of named tensors. Insertion order is preserved and
/// is the order used by [`Bound`], [`Gradients`] and checkpoints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(VeError::Contract(format!("duplicate parameter name {name:?}")));
        }
        self.entries.insert(name, Param { tensor, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| VeError::Missing(format!("parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.tensor)
            .ok_or_else(|| VeError::Missing(format!("parameter {name:?}")))
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get_index_of(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn by_index_mut(&mut self, i: usize) -> &mut Param {
        &mut self.entries[i]
    }

    /// Total number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .values()
            .filter(|p| p.trainable)
            .map(|p| p.tensor.numel())
            .sum()
    }
}

/// The graph leaves created for a [`ParamStore`] by [`Graph::bind`].
#[derive(Debug, Clone)]
pub struct Bound<'p> {
    store: &'p ParamStore,
    vars: Vec<Var>,
}

impl<'p> Bound<'p> {
    pub(crate) fn new(store: &'p ParamStore, vars: Vec<Var>) -> Self {
        Self { store, vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.store
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| VeError::Missing(format!("parameter {name:?}")))
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    /// Collects gradients of trainable parameters after a backward pass.
    pub fn gradients(&self, graph: &Graph<'p>) -> Gradients {
        let grads = self
            .store
            .iter()
            .zip(&self.vars)
            .map(|((_, p), v)| {
                p.trainable.then(|| {
                    graph
                        .grad(*v)
                        .map(<[f64]>::to_vec)
                        .unwrap_or_else(|| vec![0.0; p.tensor.numel()])
                })
            })
            .collect();
        Gradients { grads }
    }
}

/// Per-parameter gradients aligned with a [`ParamStore`]'s order.
/// Frozen parameters hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// One entry per parameter in store order; `None` for frozen ones.
    pub fn from_vecs(grads: Vec<Option<Vec<f64>>>) -> Self {
        Self { grads }
    }

    pub fn zeros_like(store: &ParamStore) -> Self {
        let grads = store
            .iter()
            .map(|(_, p)| p.trainable.then(|| vec![0.0; p.tensor.numel()]))
            .collect();
        Self { grads }
    }

    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.grads.get(i).and_then(|g| g.as_deref())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(VeError::Contract("gradient sets have different lengths".into()));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            match (a, b) {
                (Some(a), Some(b)) if a.len() == b.len() => {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
                (None, None) => {}
                _ => return Err(VeError::Contract("gradient sets disagree on shapes".into())),
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}
