//! Distribution of pointwise-merge weight magnitudes per dilated branch of
//! probe networks.

use serde::{Deserialize, Serialize};

use crate::blocks::BlockConfig;
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, STAGE_NAMES};
use crate::params::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchHistogram {
    pub stage: String,
    pub branch: usize,
    pub dilation: usize,
    pub count: usize,
    pub bin_edges: Vec<f64>,
    pub pmf: Vec<f64>,
    pub cdf: Vec<f64>,
}

/// Histograms of `|w|` of every probe's pointwise weight, split by the branch
/// feeding each input channel and pooled over the blocks of a stage. All
/// branches of one stage share `bins` equal-width bins over the stage's range.
pub fn branch_weight_stats(store: &ParamStore, cfg: &NetworkConfig, bins: usize) -> Result<Vec<BranchHistogram>> {
    if !cfg.probe {
        return Err(Error::InvalidConfig("weight statistics need a probe network".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be positive".into()));
    }
    let blocks = cfg.blocks()?;
    let mut out = Vec::new();
    for stage in STAGE_NAMES {
        let mut per_branch: Vec<Vec<f64>> = Vec::new();
        let mut dilations = Vec::new();
        for (name, block) in blocks.iter().filter(|(n, _)| n.starts_with(&format!("{stage}."))) {
            let BlockConfig::Probe(p) = block else {
                return Err(Error::InvalidConfig(format!("{name} is not a probe block")));
            };
            let ranges = p.branch_ranges()?;
            if per_branch.is_empty() {
                per_branch = vec![Vec::new(); ranges.len()];
                dilations = p.dilations.clone();
            }
            let w = store.get(&format!("{name}.pw.conv.weight"))?;
            let [cout, cin, _, _] = w.shape();
            for (b, range) in ranges.iter().enumerate() {
                for o in 0..cout {
                    for i in range.clone() {
                        per_branch[b].push(w.data()[o * cin + i].abs() as f64);
                    }
                }
            }
        }
        let lo = per_branch.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let hi = per_branch.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let bin_edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
        for (b, values) in per_branch.iter().enumerate() {
            let mut counts = vec![0usize; bins];
            for &v in values {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            let n = values.len().max(1) as f64;
            let mut acc = 0usize;
            let cdf = counts
                .iter()
                .map(|&c| {
                    acc += c;
                    acc as f64 / n
                })
                .collect();
            out.push(BranchHistogram {
                stage: stage.to_string(),
                branch: b,
                dilation: dilations[b],
                count: values.len(),
                bin_edges: bin_edges.clone(),
                pmf: counts.iter().map(|&c| c as f64 / n).collect(),
                cdf,
            });
        }
    }
    Ok(out)
}
