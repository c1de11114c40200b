//! Segmentation head: `3x3 conv -> BN -> ReLU -> 1x1 conv -> bilinear resize`.

use super::layers::{conv, conv_bn_relu, plan_conv_bn, Planner};
use crate::engine::{ConvSpec, Graph, Mode, Var};
use crate::error::Result;
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadConfig {
    pub in_channels: usize,
    pub mid_channels: usize,
    pub num_classes: usize,
}

pub fn plan(p: &mut Planner, prefix: &str, cfg: HeadConfig, hw: (usize, usize)) -> Result<(usize, usize)> {
    let out = plan_conv_bn(
        p,
        &format!("{prefix}.merge"),
        ConvSpec::new(cfg.in_channels, cfg.mid_channels, 3),
        hw,
    )?;
    p.conv(
        &format!("{prefix}.cls.conv"),
        ConvSpec::new(cfg.mid_channels, cfg.num_classes, 1).bias(true),
        out,
    )
}

/// Returns raw logits of shape `(n, num_classes, out_h, out_w)`.
#[allow(clippy::too_many_arguments)]
pub fn seghead_forward(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: HeadConfig,
    x: Var,
    out_h: usize,
    out_w: usize,
    mode: Mode,
) -> Result<Var> {
    let y = conv_bn_relu(
        g,
        store,
        &format!("{prefix}.merge"),
        x,
        ConvSpec::new(cfg.in_channels, cfg.mid_channels, 3),
        mode,
    )?;
    let y = conv(
        g,
        store,
        &format!("{prefix}.cls.conv"),
        y,
        ConvSpec::new(cfg.mid_channels, cfg.num_classes, 1).bias(true),
    )?;
    g.upsample(y, out_h, out_w)
}
