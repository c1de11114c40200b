use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};

/// `counts[gt * classes + pred]` over non-ignored pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn add(&mut self, pred: &[u8], gt: &[u8], ignore: u8) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(shape_err("confusion", format!("{} predictions for {} labels", pred.len(), gt.len())));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if g == ignore {
                continue;
            }
            let (p, g) = (p as usize, g as usize);
            if p >= self.classes || g >= self.classes {
                return Err(Error::OutOfRange(format!("label {} with {} classes", p.max(g), self.classes)));
            }
            self.counts[g * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `TP / (TP + FP + FN)` per class; `None` for classes absent from both
    /// prediction and ground truth.
    pub fn iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let tp = self.get(c, c);
                let gt: u64 = (0..self.classes).map(|p| self.get(c, p)).sum();
                let pred: u64 = (0..self.classes).map(|g| self.get(g, c)).sum();
                let union = gt + pred - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    pub fn mean_iou(&self) -> f64 {
        let present: Vec<f64> = self.iou().into_iter().flatten().collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.classes).map(|c| self.get(c, c)).sum::<u64>() as f64 / total as f64
    }

    pub fn report(&self) -> MiouReport {
        MiouReport {
            per_class: self.iou(),
            miou: self.mean_iou(),
            pixel_accuracy: self.pixel_accuracy(),
            pixels: self.total(),
            confusion: (0..self.classes)
                .map(|g| self.counts[g * self.classes..(g + 1) * self.classes].to_vec())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouReport {
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
    pub pixel_accuracy: f64,
    pub pixels: u64,
    /// Rows are ground truth, columns predictions.
    pub confusion: Vec<Vec<u64>>,
}

pub fn miou(pred: &[u8], gt: &[u8], classes: usize, ignore: u8) -> Result<(Vec<Option<f64>>, f64)> {
    let mut cm = ConfusionMatrix::new(classes);
    cm.add(pred, gt, ignore)?;
    Ok((cm.iou(), cm.mean_iou()))
}

/// Per-pixel arg-max over channels of `(n, c, h, w)` scores, as `n*h*w`
/// labels. Ties go to the lowest class index.
pub fn argmax_labels(logits: &Tensor) -> Vec<u8> {
    let [n, c, h, w] = logits.shape();
    let plane = h * w;
    let d = logits.data();
    let mut out = Vec::with_capacity(n * plane);
    for b in 0..n {
        for i in 0..plane {
            let mut best = 0;
            let mut best_v = d[b * c * plane + i];
            for k in 1..c {
                let v = d[(b * c + k) * plane + i];
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            out.push(best as u8);
        }
    }
    out
}
