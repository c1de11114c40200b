use serde::{Deserialize, Serialize};

use crate::data::IGNORE_LABEL;
use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OhemConfig {
    /// Pixels whose true-class probability is below this are always kept.
    pub prob_threshold: f64,
    /// At least `ceil(fraction * valid)` pixels are kept.
    pub min_kept_fraction: f64,
    pub ignore_label: u8,
}

impl Default for OhemConfig {
    fn default() -> Self {
        Self {
            prob_threshold: 0.7,
            min_kept_fraction: 1.0 / 16.0,
            ignore_label: IGNORE_LABEL,
        }
    }
}

impl OhemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0) {
            return Err(Error::InvalidConfig("ohem: prob_threshold must be in (0, 1)".into()));
        }
        if !(self.min_kept_fraction > 0.0 && self.min_kept_fraction <= 1.0) {
            return Err(Error::InvalidConfig("ohem: min_kept_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OhemLoss {
    /// Mean cross-entropy over the kept pixels (0 when nothing is kept).
    pub loss: f64,
    /// Gradient of `loss` with respect to the logits.
    pub grad: Tensor,
    pub kept: usize,
    pub valid: usize,
    /// Flat `n*h*w` indices of the kept pixels, ascending.
    pub kept_pixels: Vec<usize>,
}

/// Online-hard-example-mined softmax cross-entropy.
///
/// `labels` holds `n*h*w` values in `[0, classes) ∪ {ignore}`. Pixels with
/// true-class probability below the threshold are kept; if fewer than
/// `min_kept` remain, the `min_kept` hardest valid pixels are kept instead
/// (ties broken by pixel index).
pub fn ohem_ce_loss(logits: &Tensor, labels: &[u8], cfg: &OhemConfig) -> Result<OhemLoss> {
    let [n, classes, h, w] = logits.shape();
    let plane = h * w;
    if labels.len() != n * plane {
        return Err(shape_err("ohem_ce_loss", format!("{} labels for logits {:?}", labels.len(), logits.shape())));
    }
    logits.ensure_finite("ohem_ce_loss")?;
    let d = logits.data();
    let at = |p: usize, c: usize| d[(p / plane * classes + c) * plane + p % plane] as f64;

    // (pixel, true-class probability, per-pixel cross-entropy)
    let mut valid = Vec::new();
    for (p, &label) in labels.iter().enumerate() {
        if label == cfg.ignore_label {
            continue;
        }
        let t = label as usize;
        if t >= classes {
            return Err(Error::OutOfRange(format!("label {label} with {classes} classes")));
        }
        let m = (0..classes).map(|c| at(p, c)).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..classes).map(|c| (at(p, c) - m).exp()).sum();
        let log_p = at(p, t) - m - z.ln();
        valid.push((p, log_p.exp(), -log_p));
    }

    let min_kept = ((cfg.min_kept_fraction * valid.len() as f64).ceil() as usize).min(valid.len());
    let mut kept: Vec<(usize, f64, f64)> = valid.iter().copied().filter(|v| v.1 < cfg.prob_threshold).collect();
    if kept.len() < min_kept {
        let mut order = valid.clone();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        order.truncate(min_kept);
        order.sort_by_key(|v| v.0);
        kept = order;
    }

    let mut grad = Tensor::zeros(logits.shape());
    let count = kept.len();
    let mut loss = 0.0;
    if count > 0 {
        let scale = 1.0 / count as f64;
        let g = grad.data_mut();
        for &(p, _, ce) in &kept {
            loss += ce;
            let m = (0..classes).map(|c| at(p, c)).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..classes).map(|c| (at(p, c) - m).exp()).sum();
            let t = labels[p] as usize;
            for c in 0..classes {
                let prob = (at(p, c) - m).exp() / z;
                let onehot = if c == t { 1.0 } else { 0.0 };
                g[(p / plane * classes + c) * plane + p % plane] = ((prob - onehot) * scale) as f32;
            }
        }
        loss *= scale;
    }
    Ok(OhemLoss {
        loss,
        grad,
        kept: count,
        valid: valid.len(),
        kept_pixels: kept.iter().map(|v| v.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_class_pixel() {
        let logits = Tensor::zeros([1, 2, 1, 1]);
        let r = ohem_ce_loss(&logits, &[0], &OhemConfig::default()).unwrap();
        assert!((r.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(r.kept, 1);
        assert_eq!(r.grad.data(), &[-0.5, 0.5]);
    }

    #[test]
    fn all_ignored_is_zero() {
        let logits = Tensor::full([1, 3, 2, 2], 0.3);
        let r = ohem_ce_loss(&logits, &[255; 4], &OhemConfig::default()).unwrap();
        assert_eq!((r.loss, r.kept, r.valid), (0.0, 0, 0));
        assert!(r.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let logits = Tensor::zeros([1, 2, 1, 1]);
        assert!(ohem_ce_loss(&logits, &[2], &OhemConfig::default()).is_err());
        assert!(ohem_ce_loss(&logits, &[0, 0], &OhemConfig::default()).is_err());
    }
}
