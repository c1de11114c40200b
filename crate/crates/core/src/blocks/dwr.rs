//! Dilation-wise residual block.
//!
//! ```text
//! x -> 3x3 conv (stride s) -> BN -> ReLU          region residualization
//!   -> split by ratio -> depthwise 3x3, dilation d_i per group
//!   -> concat -> BN                                semantic residualization
//!   -> 1x1 conv -> (+ x when shapes match)
//! ```
//!
//! Marks `{prefix}.rr` and `{prefix}.sr` on the graph for heatmap export.

use super::config::DwrConfig;
use super::layers::{bn, conv, Planner};
use crate::engine::{ConvSpec, Graph, Mode, Var};
use crate::error::Result;
use crate::params::ParamStore;

pub(crate) fn rr_spec(in_channels: usize, width: usize, stride: usize, has_bn: bool) -> ConvSpec {
    ConvSpec::new(in_channels, width, 3).stride(stride).bias(!has_bn)
}

fn branch_spec(width: usize, dilation: usize, has_bn: bool) -> ConvSpec {
    ConvSpec::depthwise(width, 3, dilation).bias(!has_bn)
}

fn pointwise_spec(cfg: &DwrConfig, rr: usize) -> ConvSpec {
    ConvSpec::new(rr, cfg.channels, 1).bias(!cfg.switches.bn_after_pointwise)
}

pub fn plan(p: &mut Planner, prefix: &str, cfg: &DwrConfig, hw: (usize, usize)) -> Result<(usize, usize)> {
    cfg.validate()?;
    let sw = cfg.switches;
    let rr = cfg.rr_width()?;
    let out = p.conv(&format!("{prefix}.rr.conv"), rr_spec(cfg.in_channels, rr, cfg.stride, sw.rr_bn), hw)?;
    if sw.rr_bn {
        p.bn(&format!("{prefix}.rr.bn"), rr, out);
    }
    for (i, (&width, &d)) in cfg.group_widths()?.iter().zip(&cfg.dilations).enumerate() {
        p.conv(&format!("{prefix}.sr.branch{i}.conv"), branch_spec(width, d, sw.sr_bn), out)?;
    }
    if sw.sr_bn {
        p.bn(&format!("{prefix}.sr.bn"), rr, out);
    }
    p.conv(&format!("{prefix}.pw.conv"), pointwise_spec(cfg, rr), out)?;
    if sw.bn_after_pointwise {
        p.bn(&format!("{prefix}.pw.bn"), cfg.channels, out);
    }
    Ok(out)
}

pub fn dwr_forward(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: &DwrConfig,
    x: Var,
    mode: Mode,
) -> Result<Var> {
    cfg.validate()?;
    let sw = cfg.switches;
    let rr_width = cfg.rr_width()?;

    let mut rr = conv(
        g,
        store,
        &format!("{prefix}.rr.conv"),
        x,
        rr_spec(cfg.in_channels, rr_width, cfg.stride, sw.rr_bn),
    )?;
    if sw.rr_bn {
        rr = bn(g, store, &format!("{prefix}.rr.bn"), rr, mode)?;
    }
    if sw.rr_relu {
        rr = g.relu(rr);
    }
    g.mark(format!("{prefix}.rr"), rr);

    let widths = cfg.group_widths()?;
    let groups = g.split(rr, &widths)?;
    let mut branches = Vec::with_capacity(groups.len());
    for (i, ((&group, &width), &d)) in groups.iter().zip(&widths).zip(&cfg.dilations).enumerate() {
        let y = conv(
            g,
            store,
            &format!("{prefix}.sr.branch{i}.conv"),
            group,
            branch_spec(width, d, sw.sr_bn),
        )?;
        g.mark(format!("{prefix}.sr.branch{i}"), y);
        branches.push(y);
    }
    let mut sr = g.concat(&branches)?;
    if sw.sr_bn {
        sr = bn(g, store, &format!("{prefix}.sr.bn"), sr, mode)?;
    }
    if sw.sr_relu_after_bn {
        sr = g.relu(sr);
    }
    g.mark(format!("{prefix}.sr"), sr);

    let mut y = conv(g, store, &format!("{prefix}.pw.conv"), sr, pointwise_spec(cfg, rr_width))?;
    if sw.bn_after_pointwise {
        y = bn(g, store, &format!("{prefix}.pw.bn"), y, mode)?;
    }
    if cfg.has_shortcut() {
        y = g.add(x, y)?;
    }
    Ok(y)
}
