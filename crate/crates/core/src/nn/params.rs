//! Named parameter storage.

use std::collections::HashMap;

use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    /// Non-trainable entries (running statistics, metadata) are stored and
    /// checkpointed but never receive optimizer updates.
    pub trainable: bool,
}

/// Ordered map from parameter path to tensor. Every name appears once.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(Param { name, tensor, trainable });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::Lookup(format!("no parameter named {name:?}")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| &self.entries[id.0].tensor)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(id, _)| id)
            .collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.tensor.len())
            .sum()
    }

    /// Replaces the value of an existing entry, keeping its shape.
    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let id = self.require(name)?;
        let cur = &mut self.entries[id.0].tensor;
        if cur.shape() != tensor.shape() {
            return Err(Error::Dimension(format!(
                "parameter {name:?} has shape {:?}, replacement has {:?}",
                cur.shape(),
                tensor.shape()
            )));
        }
        *cur = tensor;
        Ok(())
    }

    /// Places a copy of the parameter on the tape. Gradients flow to it only
    /// when `grad` is set and the entry is trainable.
    pub fn bind(&self, tape: &mut Tape, id: ParamId, grad: bool) -> Var {
        let p = &self.entries[id.0];
        let mut t = p.tensor.clone();
        t.zero_grad();
        tape.leaf(t, grad && p.trainable)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.tensor.zero_grad();
        }
    }

    /// Copies gradients of bound variables into the parameters' grad buffers.
    pub fn accumulate(&mut self, grads: &Gradients, bound: &[(ParamId, Var)]) -> Result<()> {
        for &(id, var) in bound {
            if let Some(g) = grads.get(var) {
                self.entries[id.0].tensor.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn into_entries(self) -> Vec<Param> {
        self.entries
    }
}
