//! Named collections of trainable tensors.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngExt;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Half-width of the uniform weight initialization.
pub const INIT_RANGE: f64 = 0.1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Arc<Tensor>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), Arc::new(value));
    }

    /// Weight matrix drawn from uniform(-0.1, 0.1).
    pub fn init_uniform(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut Rng) {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = rng.random_range(-INIT_RANGE..INIT_RANGE);
        }
        self.insert(name, t);
    }

    pub fn init_zeros(&mut self, name: impl Into<String>, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .map(Arc::as_ref)
            .ok_or_else(|| Error::Input(format!("no parameter named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .map(Arc::make_mut)
            .ok_or_else(|| Error::Input(format!("no parameter named {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k, v.as_ref()))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    /// Binds one parameter on the graph without copying it.
    pub fn bind(&self, graph: &mut Graph, name: &str) -> Result<NodeId> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Input(format!("no parameter named {name}")))?;
        Ok(graph.param(name, Arc::clone(t)))
    }

    pub fn shape_of(&self, name: &str) -> Result<&[usize]> {
        Ok(self.get(name)?.shape())
    }

    /// Copies every tensor whose name starts with `prefix`, with the prefix
    /// stripped.
    pub fn strip_prefix(&self, prefix: &str) -> ParamSet {
        let tensors = self
            .tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), Arc::clone(v))))
            .collect();
        ParamSet { tensors }
    }

    pub fn with_prefix(&self, prefix: &str) -> ParamSet {
        let tensors = self
            .tensors
            .iter()
            .map(|(k, v)| (format!("{prefix}{k}"), Arc::clone(v)))
            .collect();
        ParamSet { tensors }
    }

    pub fn extend(&mut self, other: ParamSet) {
        self.tensors.extend(other.tensors);
    }

    /// Bitwise equality of every value; `PartialEq` treats `-0.0 == 0.0`.
    pub fn bit_identical(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
