use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors in a fixed insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Invalid(alloc::format!("duplicate parameter name {name}")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    /// Appends a tensor filled from `N(0, std²)`.
    pub fn insert_gaussian<R: Rng>(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut R) -> Result<()> {
        let mut t = Tensor::zeros(shape);
        if std > 0.0 {
            let normal = Normal::new(0.0, std).map_err(|e| Error::Invalid(e.to_string()))?;
            for v in t.data_mut() {
                *v = normal.sample(rng);
            }
        }
        self.insert(name, t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(|i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    /// A set with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self { entries: self.entries.iter().map(|(n, t)| (n.clone(), Tensor::zeros(t.shape()))).collect() }
    }

    /// True when names and shapes agree entry by entry.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }

    /// `self += other * scale`, entry by entry.
    pub fn axpy(&mut self, scale: f64, other: &Self) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::Invalid("parameter layouts differ".into()));
        }
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Records every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self.entries.iter().map(|(_, t)| tape.param(t.clone())).collect();
        BoundParams { names: self.entries.iter().map(|(n, _)| n.clone()).collect(), vars }
    }
}

/// Tape handles for a [`ParameterSet`], in the set's order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Invalid(alloc::format!("unknown parameter {name}")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients keyed like the bound set; parameters unreachable from the loss get zeros.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> ParameterSet {
        let entries = self
            .names
            .iter()
            .zip(&self.vars)
            .map(|(n, &v)| {
                let g = grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()));
                (n.clone(), g)
            })
            .collect();
        ParameterSet { entries }
    }
}
