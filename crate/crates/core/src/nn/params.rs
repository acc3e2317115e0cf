use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name {name}")));
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Copy with every name prefixed by `prefix`.
    pub fn prefixed(&self, prefix: &str) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (format!("{prefix}{k}"), v.clone()))
                .collect(),
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Moves all entries of `other` into `self`.
    pub fn extend(&mut self, other: ParamSet) -> Result<()> {
        for (k, v) in other.tensors {
            self.insert(k, v)?;
        }
        Ok(())
    }

    /// Checks that both sets hold the same names with the same shapes.
    pub fn check_aligned(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::contract(format!(
                "parameter sets differ in size: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((ka, va), (kb, vb)) in self.tensors.iter().zip(&other.tensors) {
            if ka != kb {
                return Err(Error::contract(format!("parameter names differ: {ka} vs {kb}")));
            }
            if va.shape() != vb.shape() {
                return Err(Error::contract(format!(
                    "parameter {ka} shapes differ: {:?} vs {:?}",
                    va.shape(),
                    vb.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Exponential moving average `θ_k ← m·θ_k + (1−m)·θ_q`.
pub fn ema_update(key: &mut ParamSet, query: &ParamSet, momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::contract(format!("momentum {momentum} outside [0, 1]")));
    }
    key.check_aligned(query)?;
    let keep = 1.0 - momentum;
    for ((_, k), (_, q)) in key.tensors.iter_mut().zip(&query.tensors) {
        for (kv, qv) in k.data_mut().iter_mut().zip(q.data()) {
            *kv = momentum * *kv + keep * qv;
        }
    }
    Ok(())
}
