use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::RealTensor;
use crate::error::{Error, Result};

/// Named trainable tensors of one network. Iteration order is the
/// lexicographic order of the names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: BTreeMap<String, RealTensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: RealTensor) -> Option<RealTensor> {
        self.entries.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Result<&RealTensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::KeyMismatch(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut RealTensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::KeyMismatch(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &RealTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut RealTensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(RealTensor::len).sum()
    }

    /// A set with the same names and shapes, filled with zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), RealTensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Fails unless `other` has exactly the same names and shapes.
    pub fn check_congruent(&self, other: &Self) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            let missing = self
                .entries
                .keys()
                .find(|k| !other.entries.contains_key(*k))
                .or_else(|| other.entries.keys().find(|k| !self.entries.contains_key(*k)));
            return Err(Error::KeyMismatch(
                missing.cloned().unwrap_or_else(|| "<count>".into()),
            ));
        }
        for (name, tensor) in &self.entries {
            match other.entries.get(name) {
                Some(o) if o.shape() == tensor.shape() => {}
                _ => return Err(Error::KeyMismatch(name.clone())),
            }
        }
        Ok(())
    }

    /// `self += factor * other` entrywise.
    pub fn axpy(&mut self, factor: f64, other: &Self) -> Result<()> {
        self.check_congruent(other)?;
        for (name, tensor) in &mut self.entries {
            tensor.axpy(factor, &other.entries[name])?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.entries.values_mut().for_each(|t| t.scale(factor));
    }

    /// Concatenation of all entries in iteration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .values()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Inverse of [`ParamSet::flatten`] on a congruent set.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.numel() {
            return Err(crate::error::dim_err(
                "ParamSet::assign_flat",
                self.numel(),
                flat.len(),
            ));
        }
        let mut offset = 0;
        for tensor in self.entries.values_mut() {
            let n = tensor.len();
            tensor.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// Glorot-uniform weight matrix `out × in`, entries in ±sqrt(6/(in+out)).
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, out: usize, inp: usize) -> RealTensor {
    let limit = (6.0 / (inp + out) as f64).sqrt();
    let data = (0..out * inp)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    RealTensor::new(vec![out, inp], data).expect("shape matches data")
}
