//! Theoretical receptive fields by layer composition:
//! `rf <- rf + (k - 1) * d * jump`, `jump <- jump * stride`.

use serde::Serialize;

use crate::blocks::BlockConfig;
use crate::error::Result;
use crate::network::NetworkConfig;

/// Geometry of one layer on a path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RfLayer {
    pub name: String,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl RfLayer {
    /// A layer with "same" padding, `d * (k - 1) / 2`.
    pub fn new(name: impl Into<String>, kernel: usize, stride: usize, dilation: usize) -> Self {
        Self {
            name: name.into(),
            kernel,
            stride,
            dilation,
            padding: dilation * (kernel - 1) / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RfStep {
    pub layer: RfLayer,
    pub rf: usize,
    pub jump: usize,
    pub start: f64,
}

/// Receptive field after a sequence of layers. `start` is the input
/// coordinate of the centre of output unit 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RfState {
    pub rf: usize,
    pub jump: usize,
    pub start: f64,
    pub trace: Vec<RfStep>,
}

impl Default for RfState {
    fn default() -> Self {
        Self {
            rf: 1,
            jump: 1,
            start: 0.0,
            trace: Vec::new(),
        }
    }
}

impl RfState {
    pub fn push(&mut self, layer: RfLayer) {
        let span = (layer.kernel - 1) * layer.dilation;
        self.rf += span * self.jump;
        self.start += (span as f64 / 2.0 - layer.padding as f64) * self.jump as f64;
        self.jump *= layer.stride;
        self.trace.push(RfStep {
            layer,
            rf: self.rf,
            jump: self.jump,
            start: self.start,
        });
    }

    /// Input window `[lo, hi]` (inclusive, unclipped) seen by output unit `i`.
    pub fn window(&self, i: usize) -> (f64, f64) {
        let c = self.start + (i * self.jump) as f64;
        let half = (self.rf - 1) as f64 / 2.0;
        (c - half, c + half)
    }
}

pub fn theoretical_rf(layers: &[RfLayer]) -> RfState {
    let mut s = RfState::default();
    for l in layers {
        s.push(l.clone());
    }
    s
}

/// Receptive fields inside one block, given the state at its input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRf {
    pub block: String,
    pub input_rf: usize,
    /// `(dilation, rf)` at each branch output; a single entry for SIR blocks.
    pub branches: Vec<(usize, usize)>,
    pub output_rf: usize,
    pub jump: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkRf {
    /// Layers along the largest-receptive-field path through stem and stages.
    pub path: RfState,
    pub blocks: Vec<BlockRf>,
    /// States at the three stage outputs.
    pub taps: Vec<RfState>,
}

fn stem_layers() -> Vec<RfLayer> {
    vec![
        RfLayer::new("stem.init", 3, 2, 1),
        RfLayer::new("stem.squeeze", 1, 1, 1),
        RfLayer::new("stem.down", 3, 2, 1),
        RfLayer::new("stem.fuse", 3, 1, 1),
    ]
}

/// Traces every block of `cfg`, following the widest branch between blocks.
pub fn network_rf(cfg: &NetworkConfig) -> Result<NetworkRf> {
    cfg.validate()?;
    let mut path = theoretical_rf(&stem_layers());
    let mut blocks = Vec::new();
    let mut taps = Vec::new();
    let all = cfg.blocks()?;
    for stage in crate::network::STAGE_NAMES {
        let prefix = format!("{stage}.");
        for (name, block) in all.iter().filter(|(n, _)| n.starts_with(&prefix)) {
            let input_rf = path.rf;
            let (first, dilations) = match block {
                BlockConfig::Dwr(c) => (RfLayer::new(format!("{name}.rr"), 3, c.stride, 1), c.dilations.clone()),
                BlockConfig::Probe(c) => (RfLayer::new(format!("{name}.rr"), 3, c.stride, 1), c.dilations.clone()),
                BlockConfig::Sir(c) => (RfLayer::new(format!("{name}.expand"), 3, c.stride, 1), vec![]),
            };
            path.push(first);
            let mut branches: Vec<(usize, usize)> = dilations
                .iter()
                .map(|&d| (d, path.rf + 2 * d * path.jump))
                .collect();
            if let Some(i) = (0..dilations.len()).max_by_key(|&i| dilations[i]) {
                path.push(RfLayer::new(format!("{name}.sr.branch{i}"), 3, 1, dilations[i]));
            } else {
                branches.push((1, path.rf));
            }
            path.push(RfLayer::new(format!("{name}.pw"), 1, 1, 1));
            blocks.push(BlockRf {
                block: name.clone(),
                input_rf,
                branches,
                output_rf: path.rf,
                jump: path.jump,
            });
        }
        taps.push(path.clone());
    }
    Ok(NetworkRf { path, blocks, taps })
}

impl NetworkRf {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<10} {:>8} {:>6}  branches (dilation: rf)\n", "block", "rf", "jump"));
        for b in &self.blocks {
            let br: Vec<String> = b.branches.iter().map(|(d, rf)| format!("d{d}: {rf}")).collect();
            s.push_str(&format!("{:<10} {:>8} {:>6}  {}\n", b.block, b.output_rf, b.jump, br.join(", ")));
        }
        for (name, t) in crate::network::STAGE_NAMES.iter().zip(&self.taps) {
            s.push_str(&format!("{name} output: rf {} jump {}\n", t.rf, t.jump));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dilated_kernels() {
        for (d, want) in [(1, 3), (3, 7), (5, 11)] {
            assert_eq!(theoretical_rf(&[RfLayer::new("dw", 3, 1, d)]).rf, want);
        }
        let two = theoretical_rf(&[RfLayer::new("a", 3, 1, 1), RfLayer::new("b", 3, 1, 1)]);
        assert_eq!(two.rf, 5);
    }

    #[test]
    fn stride_two_doubles_jump_and_keeps_centres_aligned() {
        let s = theoretical_rf(&[RfLayer::new("a", 3, 2, 1), RfLayer::new("b", 3, 2, 1)]);
        assert_eq!((s.rf, s.jump), (7, 4));
        assert_eq!(s.start, 0.0);
        assert_eq!(s.window(2), (5.0, 11.0));
    }
}
