//! Shared conv/BN units and the static layer plan used for counting and
//! initialization.

use serde::Serialize;

use crate::engine::{ConvSpec, Graph, Mode, Tensor, Var};
use crate::error::{shape_err, Result};
use crate::params::{ParamKind, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Conv(ConvSpec),
    BatchNorm { channels: usize },
}

/// One parameterised layer together with its output resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedLayer {
    pub name: String,
    pub kind: LayerKind,
    pub out_h: usize,
    pub out_w: usize,
}

impl PlannedLayer {
    pub fn params(&self) -> usize {
        match self.kind {
            LayerKind::Conv(spec) => spec.param_count(),
            LayerKind::BatchNorm { channels } => 2 * channels,
        }
    }

    /// Multiply-accumulates per image; batch norm contributes none.
    pub fn macs(&self) -> u64 {
        match self.kind {
            LayerKind::Conv(spec) => spec.macs([1, spec.out_channels, self.out_h, self.out_w]),
            LayerKind::BatchNorm { .. } => 0,
        }
    }
}

/// Accumulates the layer plan of a network in construction order.
#[derive(Debug, Default, Clone)]
pub struct Planner {
    pub layers: Vec<PlannedLayer>,
}

impl Planner {
    pub fn conv(&mut self, name: &str, spec: ConvSpec, hw: (usize, usize)) -> Result<(usize, usize)> {
        spec.validate()?;
        let (oh, ow) = match (spec.output_extent(hw.0), spec.output_extent(hw.1)) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => return Err(shape_err("plan", format!("{name}: empty output at {hw:?}"))),
        };
        self.layers.push(PlannedLayer {
            name: name.to_string(),
            kind: LayerKind::Conv(spec),
            out_h: oh,
            out_w: ow,
        });
        Ok((oh, ow))
    }

    pub fn bn(&mut self, name: &str, channels: usize, hw: (usize, usize)) {
        self.layers.push(PlannedLayer {
            name: name.to_string(),
            kind: LayerKind::BatchNorm { channels },
            out_h: hw.0,
            out_w: hw.1,
        });
    }
}

pub(crate) fn conv(g: &mut Graph, store: &ParamStore, name: &str, x: Var, spec: ConvSpec) -> Result<Var> {
    let w = store.bind(g, &format!("{name}.weight"))?;
    let b = if spec.has_bias {
        Some(store.bind(g, &format!("{name}.bias"))?)
    } else {
        None
    };
    g.conv2d(x, w, b, spec)
}

pub(crate) fn bn(g: &mut Graph, store: &ParamStore, name: &str, x: Var, mode: Mode) -> Result<Var> {
    let gamma = store.bind(g, &format!("{name}.gamma"))?;
    let beta = store.bind(g, &format!("{name}.beta"))?;
    let running = store.bn_running(name)?;
    g.batch_norm(name, x, gamma, beta, mode, running)
}

/// `conv -> bn -> relu`, the most common unit. Names: `{unit}.conv`, `{unit}.bn`.
pub(crate) fn conv_bn_relu(
    g: &mut Graph,
    store: &ParamStore,
    unit: &str,
    x: Var,
    spec: ConvSpec,
    mode: Mode,
) -> Result<Var> {
    let y = conv(g, store, &format!("{unit}.conv"), x, spec)?;
    let y = bn(g, store, &format!("{unit}.bn"), y, mode)?;
    Ok(g.relu(y))
}

pub(crate) fn plan_conv_bn(
    p: &mut Planner,
    unit: &str,
    spec: ConvSpec,
    hw: (usize, usize),
) -> Result<(usize, usize)> {
    let out = p.conv(&format!("{unit}.conv"), spec, hw)?;
    p.bn(&format!("{unit}.bn"), spec.out_channels, out);
    Ok(out)
}

/// One tensor a planned network owns, in store order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamSlot {
    pub name: String,
    pub kind: ParamKind,
    pub shape: [usize; 4],
}

impl Planner {
    /// Every tensor of the plan in the order [`Planner::build_store`] inserts them.
    pub fn param_layout(&self) -> Vec<ParamSlot> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer.kind {
                LayerKind::Conv(spec) => {
                    out.push(ParamSlot {
                        name: format!("{}.weight", layer.name),
                        kind: ParamKind::Weight,
                        shape: spec.weight_shape(),
                    });
                    if spec.has_bias {
                        out.push(ParamSlot {
                            name: format!("{}.bias", layer.name),
                            kind: ParamKind::Bias,
                            shape: [1, spec.out_channels, 1, 1],
                        });
                    }
                }
                LayerKind::BatchNorm { channels } => {
                    for (suffix, kind) in [
                        ("gamma", ParamKind::Gamma),
                        ("beta", ParamKind::Beta),
                        ("running_mean", ParamKind::RunningMean),
                        ("running_var", ParamKind::RunningVar),
                    ] {
                        out.push(ParamSlot {
                            name: format!("{}.{suffix}", layer.name),
                            kind,
                            shape: [1, channels, 1, 1],
                        });
                    }
                }
            }
        }
        out
    }

    /// Allocates every planned tensor: conv weights from `N(0, 2 / fan_in)`,
    /// zero biases, unit gamma and running variance, zero beta and running
    /// mean. Weights are drawn in plan order from a ChaCha8 stream seeded
    /// with `seed`.
    pub fn build_store(&self, seed: u64, bn_eps: f32, bn_momentum: f32) -> Result<ParamStore> {
        use rand::SeedableRng;

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(bn_eps, bn_momentum);
        for slot in self.param_layout() {
            let t = match slot.kind {
                ParamKind::Weight => {
                    let [_, cin, kh, kw] = slot.shape;
                    let std = (2.0 / (cin * kh * kw) as f32).sqrt();
                    Tensor::randn(slot.shape, std, &mut rng)
                }
                ParamKind::Gamma | ParamKind::RunningVar => Tensor::full(slot.shape, 1.0),
                _ => Tensor::zeros(slot.shape),
            };
            store.insert(slot.name, slot.kind, t)?;
        }
        Ok(store)
    }

    pub fn total_params(&self) -> usize {
        self.layers.iter().map(PlannedLayer::params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(PlannedLayer::macs).sum()
    }
}
