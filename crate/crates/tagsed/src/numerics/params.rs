use std::collections::HashMap;

use super::tape::{NodeId, Tape};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use rand::RngExt;

/// One named model parameter. Non-trainable entries (running statistics)
/// ride along through checkpoints but are skipped by the optimizer.
#[derive(Clone)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Ordered, named parameter collection shared by all models.
#[derive(Clone, Default)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry {
            name,
            tensor,
            trainable,
        });
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.entries[self.index[name]].tensor
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self.index[name];
        &mut self.entries[i].tensor
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParamEntry> {
        self.entries.iter()
    }

    pub fn trainable(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter().filter(|e| e.trainable)
    }

    /// Total number of trainable scalar parameters.
    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|e| e.tensor.numel()).sum()
    }

    /// Register every entry as a leaf on `tape`.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> BoundParams<'a> {
        let ids = self
            .entries
            .iter()
            .map(|e| tape.leaf(e.tensor.clone()))
            .collect();
        BoundParams { set: self, ids }
    }

    /// Bind with the trainable entries supplied as existing leaves (in
    /// declaration order); non-trainable entries are leafed from their
    /// stored tensors. Lets gradient checks substitute parameter values.
    pub fn bind_with<'a>(&'a self, tape: &mut Tape, trainable_ids: &[NodeId]) -> BoundParams<'a> {
        let mut it = trainable_ids.iter();
        let ids = self
            .entries
            .iter()
            .map(|e| {
                if e.trainable {
                    *it.next().expect("one id per trainable entry")
                } else {
                    tape.leaf(e.tensor.clone())
                }
            })
            .collect();
        BoundParams { set: self, ids }
    }

    /// Overwrite tensors from `(name, tensor)` pairs; every pair must
    /// match an existing entry of identical shape.
    pub fn load_entries(&mut self, loaded: Vec<(String, Tensor)>) -> Result<()> {
        for (name, tensor) in loaded {
            let Some(&i) = self.index.get(&name) else {
                return Err(Error::Invalid(format!("unknown parameter `{name}` in checkpoint")));
            };
            if self.entries[i].tensor.shape() != tensor.shape() {
                return Err(Error::Invalid(format!(
                    "parameter `{name}` shape {:?} does not match checkpoint {:?}",
                    self.entries[i].tensor.shape(),
                    tensor.shape()
                )));
            }
            self.entries[i].tensor = tensor;
        }
        Ok(())
    }
}

/// A ParamSet registered on a tape for one forward pass.
pub struct BoundParams<'a> {
    set: &'a ParamSet,
    ids: Vec<NodeId>,
}

impl BoundParams<'_> {
    pub fn id(&self, name: &str) -> NodeId {
        self.ids[self.set.index[name]]
    }

    pub fn raw(&self, name: &str) -> &Tensor {
        self.set.get(name)
    }

    /// (name, node) pairs for trainable entries, in declaration order.
    pub fn trainable_ids(&self) -> Vec<(&str, NodeId)> {
        self.set
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.trainable)
            .map(|(i, e)| (e.name.as_str(), self.ids[i]))
            .collect()
    }
}

/// Uniform init in [-limit, limit].
pub fn uniform_init(rng: &mut impl RngExt, shape: &[usize], limit: Real) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let u: f64 = rng.random_range(-1.0..1.0);
        u as Real * limit
    })
}
