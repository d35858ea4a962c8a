use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

/// Named parameter tensors in fixed insertion order. Iteration order is
/// the insertion order, never hash order, so initialization, optimizer
/// steps, and serialization all see the same sequence.
#[derive(Clone, Debug, Default)]
pub struct ParamMap {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamMap {
    pub fn new() -> ParamMap {
        ParamMap::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::input("params", format!("duplicate parameter {name:?}")));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    /// Register every parameter as a tape leaf, in insertion order, and
    /// return the name → node mapping for graph builders.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        let mut ids = HashMap::with_capacity(self.entries.len());
        for (name, tensor) in &self.entries {
            ids.insert(name.clone(), tape.leaf(tensor)?);
        }
        Ok(BoundParams { ids })
    }

    /// Total number of scalar values across all tensors.
    pub fn numel(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }
}

/// Tape nodes for one [`ParamMap`], valid for a single tape.
pub struct BoundParams {
    ids: HashMap<String, NodeId>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::input("params", format!("unbound parameter {name:?}")))
    }
}

/// Truncated normal initialization: N(0, std²) with draws beyond two
/// standard deviations rejected and resampled.
pub fn trunc_normal(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    std: f64,
    requires_grad: bool,
) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut data = Vec::with_capacity(rows * cols);
    while data.len() < rows * cols {
        let v = normal.sample(rng);
        if v.abs() <= 2.0 * std {
            data.push(v);
        }
    }
    Tensor::new(&[rows, cols], data, requires_grad).expect("consistent shape")
}

pub fn full(rows: usize, cols: usize, value: f64, requires_grad: bool) -> Tensor {
    Tensor::new(&[rows, cols], vec![value; rows * cols], requires_grad)
        .expect("consistent shape")
}
