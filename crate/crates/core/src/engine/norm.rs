use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Affine parameters and running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
    pub momentum: f32,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Per-channel batch statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Vec<f32>,
    /// Biased variance, used for normalization.
    pub var: Vec<f32>,
    pub inv_std: Vec<f32>,
    /// Number of reduced elements per channel (`n * h * w`).
    pub count: usize,
}

impl BnCache {
    /// Unbiased variance, the quantity folded into the running estimate.
    pub fn unbiased_var(&self) -> Vec<f32> {
        let m = self.count as f32;
        self.var.iter().map(|v| v * m / (m - 1.0)).collect()
    }
}

fn check_channels(x: &Tensor, channels: usize, op: &'static str) -> Result<()> {
    if x.c() != channels {
        return Err(shape_err(
            op,
            format!("input has {} channels, state has {channels}", x.c()),
        ));
    }
    Ok(())
}

/// Mean and biased variance per channel, reduced in (n, h, w) order with
/// f64 accumulators.
pub fn batch_stats(x: &Tensor) -> BnCache {
    let [n, c, _, _] = x.shape();
    let plane = x.plane();
    let m = (n * plane) as f32;
    let xd = x.data();
    let (mean, var): (Vec<f32>, Vec<f32>) = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut sum = 0.0f64;
            for b in 0..n {
                for &v in &xd[(b * c + ch) * plane..(b * c + ch + 1) * plane] {
                    sum += v as f64;
                }
            }
            let mean = sum / m as f64;
            let mut sq = 0.0f64;
            for b in 0..n {
                for &v in &xd[(b * c + ch) * plane..(b * c + ch + 1) * plane] {
                    let d = v as f64 - mean;
                    sq += d * d;
                }
            }
            (mean as f32, (sq / m as f64) as f32)
        })
        .unzip();
    BnCache {
        inv_std: Vec::new(),
        mean,
        var,
        count: n * plane,
    }
}

/// Applies `gamma * (x - mean) * inv_std + beta` per channel.
pub fn normalize(x: &Tensor, mean: &[f32], inv_std: &[f32], gamma: &[f32], beta: &[f32]) -> Tensor {
    let c = x.c();
    let plane = x.plane();
    let mut out = x.clone();
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(p, chunk)| {
            let ch = p % c;
            for v in chunk.iter_mut() {
                *v = gamma[ch] * ((*v - mean[ch]) * inv_std[ch]) + beta[ch];
            }
        });
    out
}

/// Train-mode normalization; returns the output and the batch statistics.
pub fn batchnorm_train(x: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<(Tensor, BnCache)> {
    check_channels(x, gamma.len(), "batchnorm")?;
    if beta.len() != gamma.len() {
        return Err(shape_err("batchnorm", "gamma and beta lengths differ"));
    }
    if x.n() * x.plane() < 2 {
        return Err(shape_err(
            "batchnorm",
            "train mode needs at least two values per channel",
        ));
    }
    x.ensure_finite("batchnorm")?;
    let mut cache = batch_stats(x);
    cache.inv_std = cache.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let y = normalize(x, &cache.mean, &cache.inv_std, gamma, beta);
    Ok((y, cache))
}

pub fn eval_inv_std(running_var: &[f32], eps: f32) -> Vec<f32> {
    running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect()
}

pub fn batchnorm_forward(x: &Tensor, state: &mut BatchNormState, mode: Mode) -> Result<Tensor> {
    check_channels(x, state.channels(), "batchnorm")?;
    match mode {
        Mode::Train => {
            let (y, cache) = batchnorm_train(x, &state.gamma, &state.beta, state.eps)?;
            update_running(state, &cache);
            Ok(y)
        }
        Mode::Eval => {
            x.ensure_finite("batchnorm")?;
            let inv_std = eval_inv_std(&state.running_var, state.eps);
            Ok(normalize(x, &state.running_mean, &inv_std, &state.gamma, &state.beta))
        }
    }
}

/// `running <- (1 - momentum) * running + momentum * batch`, using the unbiased
/// batch variance.
pub fn update_running(state: &mut BatchNormState, cache: &BnCache) {
    let m = state.momentum;
    let var = cache.unbiased_var();
    for ch in 0..state.channels() {
        state.running_mean[ch] = if m == 1.0 {
            cache.mean[ch]
        } else {
            (1.0 - m) * state.running_mean[ch] + m * cache.mean[ch]
        };
        state.running_var[ch] = if m == 1.0 {
            var[ch]
        } else {
            (1.0 - m) * state.running_var[ch] + m * var[ch]
        };
    }
}

pub struct BnGrads {
    pub grad_x: Tensor,
    pub grad_gamma: Vec<f32>,
    pub grad_beta: Vec<f32>,
}

/// Exact gradient of train-mode normalization, including the dependence of the
/// batch mean and variance on `x`.
pub fn batchnorm_backward(x: &Tensor, gamma: &[f32], cache: &BnCache, grad_out: &Tensor) -> Result<BnGrads> {
    check_channels(x, gamma.len(), "batchnorm_backward")?;
    grad_out.ensure_shape("batchnorm_backward", x.shape())?;
    let [n, c, _, _] = x.shape();
    let plane = x.plane();
    let m = (n * plane) as f32;
    let xd = x.data();
    let gd = grad_out.data();

    let (grad_gamma, grad_beta): (Vec<f32>, Vec<f32>) = (0..c)
        .into_par_iter()
        .map(|ch| {
            let (mean, inv) = (cache.mean[ch], cache.inv_std[ch]);
            let mut sg = 0.0f64;
            let mut sgx = 0.0f64;
            for b in 0..n {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    sg += gd[i] as f64;
                    sgx += (gd[i] * ((xd[i] - mean) * inv)) as f64;
                }
            }
            (sgx as f32, sg as f32)
        })
        .unzip();

    let mut grad_x = Tensor::zeros(x.shape());
    grad_x
        .data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(p, chunk)| {
            let ch = p % c;
            let off = p * plane;
            let (mean, inv) = (cache.mean[ch], cache.inv_std[ch]);
            let scale = gamma[ch] * inv / m;
            for (i, slot) in chunk.iter_mut().enumerate() {
                let xhat = (xd[off + i] - mean) * inv;
                *slot = scale * (m * gd[off + i] - grad_beta[ch] - xhat * grad_gamma[ch]);
            }
        });
    Ok(BnGrads {
        grad_x,
        grad_gamma,
        grad_beta,
    })
}

/// Gradient of eval-mode normalization, where the statistics are constants.
pub fn batchnorm_eval_backward(
    x: &Tensor,
    gamma: &[f32],
    mean: &[f32],
    inv_std: &[f32],
    grad_out: &Tensor,
) -> Result<BnGrads> {
    check_channels(x, gamma.len(), "batchnorm_backward")?;
    grad_out.ensure_shape("batchnorm_backward", x.shape())?;
    let [n, c, _, _] = x.shape();
    let plane = x.plane();
    let xd = x.data();
    let gd = grad_out.data();
    let mut grad_gamma = vec![0.0f32; c];
    let mut grad_beta = vec![0.0f32; c];
    for ch in 0..c {
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                grad_beta[ch] += gd[i];
                grad_gamma[ch] += gd[i] * ((xd[i] - mean[ch]) * inv_std[ch]);
            }
        }
    }
    let mut grad_x = grad_out.clone();
    for (p, chunk) in grad_x.data_mut().chunks_mut(plane).enumerate() {
        let ch = p % c;
        let s = gamma[ch] * inv_std[ch];
        for v in chunk {
            *v *= s;
        }
    }
    Ok(BnGrads {
        grad_x,
        grad_gamma,
        grad_beta,
    })
}
