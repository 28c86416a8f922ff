use indexmap::IndexMap;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Ordered collection of named parameter tensors.
///
/// Gradients use the same type: a `ParamSet` whose tensors shape-match the
/// parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            tensors: IndexMap::new(),
        }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Parameter {
                name,
                reason: "duplicate parameter name".into(),
            });
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.get(name).ok_or_else(|| Error::Parameter {
            name: name.into(),
            reason: "missing".into(),
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors.get_mut(name).ok_or_else(|| Error::Parameter {
            name: name.into(),
            reason: "missing".into(),
        })
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

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Adds `other` into `self` tensor by tensor; names and shapes must match.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        for (name, t) in &other.tensors {
            let dst = self.get_mut(name)?;
            dst.add_assign(t).map_err(|e| Error::Parameter {
                name: name.clone(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Adds `g` into the tensor called `name`.
    pub fn add_to(&mut self, name: &str, g: &Tensor<T>) -> Result<()> {
        let dst = self.get_mut(name)?;
        dst.add_assign(g).map_err(|e| Error::Parameter {
            name: name.into(),
            reason: e.to_string(),
        })
    }

    pub fn scale(&mut self, alpha: T) {
        for t in self.tensors.values_mut() {
            t.scale(alpha);
        }
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Copy of the subset whose names start with `prefix`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_owned(), v.clone())))
                .collect(),
        }
    }

    /// Appends every tensor of `other` under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &Self) -> Result<()> {
        for (k, v) in &other.tensors {
            self.insert(format!("{prefix}{k}"), v.clone())?;
        }
        Ok(())
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        for (name, t) in &self.tensors {
            let o = other.tensors.get(name).ok_or_else(|| Error::Parameter {
                name: name.clone(),
                reason: "missing".into(),
            })?;
            if o.shape() != t.shape() {
                return Err(Error::Parameter {
                    name: name.clone(),
                    reason: format!("shape {:?}, expected {:?}", o.shape(), t.shape()),
                });
            }
        }
        if let Some(extra) = other
            .tensors
            .keys()
            .find(|k| !self.tensors.contains_key(*k))
        {
            return Err(Error::Parameter {
                name: extra.clone(),
                reason: "unexpected parameter".into(),
            });
        }
        Ok(())
    }
}
