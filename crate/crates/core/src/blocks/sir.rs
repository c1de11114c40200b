//! Simple inverted residual block: `3x3 conv (c_in -> lambda*c) -> BN -> ReLU
//! -> 1x1 conv (-> c)`, plus the identity shortcut when shapes allow.

use super::config::SirConfig;
use super::layers::{conv, conv_bn_relu, plan_conv_bn, Planner};
use crate::engine::{ConvSpec, Graph, Mode, Var};
use crate::error::Result;
use crate::params::ParamStore;

fn expand_spec(cfg: &SirConfig) -> ConvSpec {
    ConvSpec::new(cfg.in_channels, cfg.hidden_width(), 3).stride(cfg.stride)
}

fn pointwise_spec(cfg: &SirConfig) -> ConvSpec {
    ConvSpec::new(cfg.hidden_width(), cfg.channels, 1).bias(true)
}

pub fn plan(p: &mut Planner, prefix: &str, cfg: &SirConfig, hw: (usize, usize)) -> Result<(usize, usize)> {
    cfg.validate()?;
    let out = plan_conv_bn(p, &format!("{prefix}.expand"), expand_spec(cfg), hw)?;
    p.conv(&format!("{prefix}.pw.conv"), pointwise_spec(cfg), out)
}

pub fn sir_forward(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: &SirConfig,
    x: Var,
    mode: Mode,
) -> Result<Var> {
    cfg.validate()?;
    let hidden = conv_bn_relu(g, store, &format!("{prefix}.expand"), x, expand_spec(cfg), mode)?;
    g.mark(format!("{prefix}.rr"), hidden);
    let y = conv(g, store, &format!("{prefix}.pw.conv"), hidden, pointwise_spec(cfg))?;
    if cfg.has_shortcut() {
        g.add(x, y)
    } else {
        Ok(y)
    }
}
