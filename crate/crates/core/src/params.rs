//! Named parameter storage shared by blocks, networks, training and analysis.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::engine::{BnRunning, BnUpdate, Graph, Tensor, Var};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn is_learnable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }

    /// Batch-norm affine parameters are exempt from weight decay.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub kind: ParamKind,
    pub tensor: Tensor,
}

/// Ordered map from parameter name to tensor. Iteration order is insertion
/// order, which is the construction order of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
    pub bn_eps: f32,
    pub bn_momentum: f32,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new(1e-5, 0.1)
    }
}

impl ParamStore {
    pub fn new(bn_eps: f32, bn_momentum: f32) -> Self {
        Self {
            entries: IndexMap::new(),
            bn_eps,
            bn_momentum,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter {name}")));
        }
        self.entries.insert(name, Param { kind, tensor });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| shape_err("param_store", format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.tensor)
            .ok_or_else(|| shape_err("param_store", format!("missing parameter {name}")))
    }

    pub fn kind(&self, name: &str) -> Option<ParamKind> {
        self.entries.get(name).map(|p| p.kind)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
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

    /// Total number of learnable scalars (running statistics excluded).
    pub fn learnable_count(&self) -> usize {
        self.entries
            .values()
            .filter(|p| p.kind.is_learnable())
            .map(|p| p.tensor.len())
            .sum()
    }

    /// Binds `name` into `g` as a parameter leaf.
    pub fn bind(&self, g: &mut Graph, name: &str) -> Result<Var> {
        Ok(g.param(name, self.get(name)?.clone()))
    }

    /// Running statistics of the batch-norm layer `layer`.
    pub fn bn_running(&self, layer: &str) -> Result<BnRunning<'_>> {
        Ok(BnRunning {
            mean: self.get(&format!("{layer}.running_mean"))?.data(),
            var: self.get(&format!("{layer}.running_var"))?.data(),
            eps: self.bn_eps,
        })
    }

    /// Folds train-mode batch statistics into the running estimates.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate]) -> Result<()> {
        let m = self.bn_momentum;
        for u in updates {
            for (suffix, batch) in [("running_mean", &u.mean), ("running_var", &u.unbiased_var)] {
                let t = self.get_mut(&format!("{}.{suffix}", u.layer))?;
                if t.len() != batch.len() {
                    return Err(shape_err("apply_bn_updates", format!("layer {}", u.layer)));
                }
                for (r, &b) in t.data_mut().iter_mut().zip(batch.iter()) {
                    *r = (1.0 - m) * *r + m * b;
                }
            }
        }
        Ok(())
    }

    /// Adds a batch-norm layer with unit scale, zero shift and unit variance.
    pub fn insert_bn(&mut self, layer: &str, channels: usize) -> Result<()> {
        self.insert(format!("{layer}.gamma"), ParamKind::Gamma, Tensor::channel_vector(vec![1.0; channels]))?;
        self.insert(format!("{layer}.beta"), ParamKind::Beta, Tensor::channel_vector(vec![0.0; channels]))?;
        self.insert(
            format!("{layer}.running_mean"),
            ParamKind::RunningMean,
            Tensor::channel_vector(vec![0.0; channels]),
        )?;
        self.insert(
            format!("{layer}.running_var"),
            ParamKind::RunningVar,
            Tensor::channel_vector(vec![1.0; channels]),
        )
    }

    /// Sets every learnable tensor to zero, and optionally every gamma to `gamma`.
    pub fn zero_learnable(&mut self, gamma: Option<f32>) {
        for p in self.entries.values_mut() {
            match (p.kind, gamma) {
                (ParamKind::Gamma, Some(v)) => p.tensor.data_mut().fill(v),
                (ParamKind::Gamma, None) => {}
                (k, _) if k.is_learnable() => p.tensor.data_mut().fill(0.0),
                _ => {}
            }
        }
    }
}
