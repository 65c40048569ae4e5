use crate::error::{Error, Result};

use super::{Real, Tensor};

/// A named tensor in a [`ParamSet`]. Non-trainable entries (batch-norm
/// running statistics) are stored and checkpointed but never optimized.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Ordered collection of uniquely named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T = f32> {
    entries: Vec<Param<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>, trainable: bool) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::DuplicateName(name));
        }
        self.entries.push(Param { name, tensor, trainable });
        Ok(self.entries.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.tensor)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn entry(&self, index: usize) -> &Param<T> {
        &self.entries[index]
    }

    pub fn entry_mut(&mut self, index: usize) -> &mut Param<T> {
        &mut self.entries[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|p| p.trainable).map(|p| p.tensor.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|p| p.tensor.all_finite())
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }
}
