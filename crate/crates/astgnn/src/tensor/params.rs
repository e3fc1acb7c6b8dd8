//! Named parameter collections.

use indexmap::IndexMap;

use super::{Gradients, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct Entry {
    tensor: Tensor,
    trainable: bool,
}

/// Ordered, uniquely named collection of variables. Iteration order is
/// insertion order, which keeps optimiser updates deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: IndexMap<String, Entry>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Register a trainable parameter. The tensor is re-tagged as a variable
    /// so gradients reach it.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        self.insert_with(name, tensor, true)
    }

    /// Register a non-trainable parameter (kept in checkpoints, skipped by
    /// optimisers).
    pub fn insert_frozen(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        self.insert_with(name, tensor, false)
    }

    fn insert_with(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        let tensor = if tensor.is_variable() { tensor } else { tensor.to_var() };
        self.entries.insert(name, Entry { tensor, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.tensor)
            .ok_or_else(|| Error::config(format!("unknown parameter {name:?}")))
    }

    /// Replace a parameter's values (same shape), e.g. after an optimiser step.
    pub fn replace(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::config(format!("unknown parameter {name:?}")))?;
        if entry.tensor.shape() != tensor.shape() {
            return Err(Error::shape(
                "param_replace",
                format!(
                    "{name:?} has shape {:?}, replacement is {:?}",
                    entry.tensor.shape(),
                    tensor.shape()
                ),
            ));
        }
        entry.tensor = if tensor.is_variable() { tensor } else { tensor.to_var() };
        Ok(())
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).map(|e| e.trainable).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, e)| (n.as_str(), &e.tensor))
    }

    /// Deep copy; the copies are fresh variables.
    pub fn snapshot(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, e) in &self.entries {
            out.entries.insert(
                name.clone(),
                Entry {
                    tensor: e.tensor.to_var(),
                    trainable: e.trainable,
                },
            );
        }
        out
    }

    /// Gradient buffer for each trainable parameter; zeros when the loss did
    /// not touch the parameter.
    pub fn gradients<'a>(&'a self, grads: &'a Gradients) -> impl Iterator<Item = (&'a str, &'a Tensor, Vec<f64>)> {
        self.entries.iter().filter(|(_, e)| e.trainable).map(move |(n, e)| {
            let g = grads
                .get(&e.tensor)
                .map(|s| s.to_vec())
                .unwrap_or_else(|| vec![0.0; e.tensor.len()]);
            (n.as_str(), &e.tensor, g)
        })
    }
}
