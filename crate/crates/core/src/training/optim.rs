use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::engine::{GradStore, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f32,
    pub weight_decay: f32,
    pub poly_power: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 0.0005,
            poly_power: 0.9,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("sgd: need lr >= 0, momentum in [0, 1), weight_decay >= 0".into()));
        }
        if !(self.poly_power > 0.0) {
            return Err(Error::InvalidConfig("sgd: poly_power must be positive".into()));
        }
        Ok(())
    }
}

/// `lr * (1 - iter / max_iters)^power`, clamped to 0 from `max_iters` on.
pub fn poly_lr(iter: usize, max_iters: usize, cfg: &SgdConfig) -> f64 {
    if max_iters == 0 || iter >= max_iters {
        return 0.0;
    }
    cfg.lr * (1.0 - iter as f64 / max_iters as f64).powf(cfg.poly_power)
}

/// Momentum buffers, one per learnable parameter.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    pub config: SgdConfig,
    pub velocity: IndexMap<String, Tensor>,
}

impl OptimizerState {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            velocity: IndexMap::new(),
        }
    }
}

/// `v <- momentum * v + g + wd * p; p <- p - lr * v`. Batch-norm affine
/// parameters skip weight decay; running statistics are never touched. A
/// learnable parameter without a gradient is treated as having gradient 0.
pub fn sgd_step(store: &mut ParamStore, grads: &GradStore, state: &mut OptimizerState, lr: f64) -> Result<()> {
    let cfg = state.config;
    let lr = lr as f32;
    for (name, param) in store.iter_mut() {
        if !param.kind.is_learnable() {
            continue;
        }
        let grad = grads.get(name);
        if let Some(g) = grad {
            if g.shape() != param.tensor.shape() {
                return Err(shape_err("sgd_step", format!("gradient of {name} has shape {:?}", g.shape())));
            }
        }
        let wd = if param.kind.decays() { cfg.weight_decay } else { 0.0 };
        let v = state
            .velocity
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(param.tensor.shape()));
        let p = param.tensor.data_mut();
        let vd = v.data_mut();
        for i in 0..p.len() {
            let g = grad.map_or(0.0, |g| g.data()[i]);
            vd[i] = cfg.momentum * vd[i] + g + wd * p[i];
            p[i] -= lr * vd[i];
        }
    }
    Ok(())
}
