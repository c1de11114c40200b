//! Receptive-field demand probe. Same region residualization as the DWR block,
//! but every dilated branch filters the whole region map, so the pointwise
//! merge sees `branches * rr_width` inputs and its weights can be attributed
//! to a branch by input channel (see [`ProbeConfig::branch_ranges`]).

use super::config::ProbeConfig;
use super::layers::{bn, conv, conv_bn_relu, plan_conv_bn, Planner};
use crate::engine::{ConvSpec, Graph, Mode, Var};
use crate::error::Result;
use crate::params::ParamStore;

pub fn plan(p: &mut Planner, prefix: &str, cfg: &ProbeConfig, hw: (usize, usize)) -> Result<(usize, usize)> {
    cfg.validate()?;
    let rr = cfg.rr_width()?;
    let out = plan_conv_bn(
        p,
        &format!("{prefix}.rr"),
        ConvSpec::new(cfg.in_channels, rr, 3).stride(cfg.stride),
        hw,
    )?;
    for (i, &d) in cfg.dilations.iter().enumerate() {
        p.conv(&format!("{prefix}.sr.branch{i}.conv"), ConvSpec::depthwise(rr, 3, d), out)?;
    }
    let cat = cfg.concat_width()?;
    p.bn(&format!("{prefix}.sr.bn"), cat, out);
    p.conv(
        &format!("{prefix}.pw.conv"),
        ConvSpec::new(cat, cfg.channels, 1).bias(true),
        out,
    )
}

pub fn probe_forward(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: &ProbeConfig,
    x: Var,
    mode: Mode,
) -> Result<Var> {
    cfg.validate()?;
    let rr_width = cfg.rr_width()?;
    let rr = conv_bn_relu(
        g,
        store,
        &format!("{prefix}.rr"),
        x,
        ConvSpec::new(cfg.in_channels, rr_width, 3).stride(cfg.stride),
        mode,
    )?;
    g.mark(format!("{prefix}.rr"), rr);
    let mut branches = Vec::with_capacity(cfg.dilations.len());
    for (i, &d) in cfg.dilations.iter().enumerate() {
        let y = conv(
            g,
            store,
            &format!("{prefix}.sr.branch{i}.conv"),
            rr,
            ConvSpec::depthwise(rr_width, 3, d),
        )?;
        branches.push(y);
    }
    let cat = g.concat(&branches)?;
    let sr = bn(g, store, &format!("{prefix}.sr.bn"), cat, mode)?;
    g.mark(format!("{prefix}.sr"), sr);
    let y = conv(
        g,
        store,
        &format!("{prefix}.pw.conv"),
        sr,
        ConvSpec::new(cfg.concat_width()?, cfg.channels, 1).bias(true),
    )?;
    if cfg.has_shortcut() {
        g.add(x, y)
    } else {
        Ok(y)
    }
}
