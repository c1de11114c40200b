//! Analytic parameter and multiply-accumulate accounting.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::Serialize;

use super::config::{NetworkConfig, Reference};
use super::model::plan;
use crate::blocks::LayerKind;
use crate::error::Result;

/// Input size the reference figures were measured at.
pub const REFERENCE_INPUT: (usize, usize) = (512, 1024);

pub const MAC_CONVENTION: &str = "MACs = sum over convolutions of output elements x (k*k*in_channels/groups); \
batch norm, ReLU, pooling, upsampling and additions are not counted; one image";

#[derive(Debug, Clone, Serialize)]
pub struct LayerRow {
    pub name: String,
    pub op: String,
    pub output: [usize; 3],
    pub params: usize,
    pub macs: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub params: usize,
    pub macs: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Deviation {
    pub reference_params: f64,
    pub reference_macs: f64,
    pub params_pct: f64,
    pub macs_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountReport {
    pub variant: String,
    pub input: [usize; 3],
    pub params: usize,
    pub macs: u64,
    pub convention: String,
    pub deviation: Option<Deviation>,
    pub groups: Vec<GroupRow>,
    pub layers: Vec<LayerRow>,
}

pub fn count_params(cfg: &NetworkConfig) -> Result<usize> {
    Ok(plan(cfg, 32, 32)?.total_params())
}

pub fn count_macs(cfg: &NetworkConfig, h: usize, w: usize) -> Result<u64> {
    Ok(plan(cfg, h, w)?.total_macs())
}

fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

pub fn count_report(cfg: &NetworkConfig, h: usize, w: usize) -> Result<CountReport> {
    let p = plan(cfg, h, w)?;
    let mut groups: IndexMap<String, (usize, u64)> = IndexMap::new();
    let layers: Vec<LayerRow> = p
        .layers
        .iter()
        .map(|l| {
            let (op, c) = match l.kind {
                LayerKind::Conv(s) => {
                    let mut op = format!("conv{}x{} {}->{}", s.kernel, s.kernel, s.in_channels, s.out_channels);
                    if s.stride != 1 {
                        let _ = write!(op, " s{}", s.stride);
                    }
                    if s.dilation != 1 {
                        let _ = write!(op, " d{}", s.dilation);
                    }
                    if s.groups != 1 {
                        let _ = write!(op, " g{}", s.groups);
                    }
                    if s.has_bias {
                        op.push_str(" +b");
                    }
                    (op, s.out_channels)
                }
                LayerKind::BatchNorm { channels } => (format!("bn {channels}"), channels),
            };
            let g = groups.entry(group_of(&l.name).to_string()).or_default();
            g.0 += l.params();
            g.1 += l.macs();
            LayerRow {
                name: l.name.clone(),
                op,
                output: [c, l.out_h, l.out_w],
                params: l.params(),
                macs: l.macs(),
            }
        })
        .collect();
    let params = p.total_params();
    let macs = p.total_macs();
    let at_reference_size = (h, w) == REFERENCE_INPUT;
    let deviation = cfg.variant.reference().filter(|_| at_reference_size).map(|Reference { params: rp, macs: rm }| Deviation {
        reference_params: rp,
        reference_macs: rm,
        params_pct: 100.0 * (params as f64 - rp) / rp,
        macs_pct: 100.0 * (macs as f64 - rm) / rm,
    });
    Ok(CountReport {
        variant: cfg.variant.to_string(),
        input: [3, h, w],
        params,
        macs,
        convention: MAC_CONVENTION.to_string(),
        deviation,
        groups: groups
            .into_iter()
            .map(|(group, (params, macs))| GroupRow { group, params, macs })
            .collect(),
        layers,
    })
}

impl CountReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table. With `per_layer` false only group totals are listed.
    pub fn to_text(&self, per_layer: bool) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant {}  input {}x{}x{}", self.variant, self.input[0], self.input[1], self.input[2]);
        let _ = writeln!(s, "# {}", self.convention);
        let name_w = self
            .layers
            .iter()
            .map(|l| l.name.len())
            .chain([5])
            .max()
            .unwrap_or(5);
        if per_layer {
            let _ = writeln!(s, "{:<name_w$}  {:<24}  {:>16}  {:>10}  {:>14}", "layer", "op", "output", "params", "macs");
            for l in &self.layers {
                let out = format!("{}x{}x{}", l.output[0], l.output[1], l.output[2]);
                let _ = writeln!(s, "{:<name_w$}  {:<24}  {:>16}  {:>10}  {:>14}", l.name, l.op, out, l.params, l.macs);
            }
            s.push('\n');
        }
        let _ = writeln!(s, "{:<10}  {:>10}  {:>16}", "group", "params", "macs");
        for g in &self.groups {
            let _ = writeln!(s, "{:<10}  {:>10}  {:>16}", g.group, g.params, g.macs);
        }
        let _ = writeln!(s, "{:<10}  {:>10}  {:>16}", "total", self.params, self.macs);
        if let Some(d) = &self.deviation {
            let _ = writeln!(
                s,
                "params {:.3}M vs reference {:.2}M ({:+.1}%)",
                self.params as f64 / 1e6,
                d.reference_params / 1e6,
                d.params_pct
            );
            let _ = writeln!(
                s,
                "macs   {:.2}G vs reference {:.2}G ({:+.1}%)",
                self.macs as f64 / 1e9,
                d.reference_macs / 1e9,
                d.macs_pct
            );
        }
        s
    }
}
