//! Stem: quarter-resolution feature extraction from RGB input.
//!
//! ```text
//! x -> init 3x3/2 (3 -> c/2) -> BN                (no activation)
//!   +-> squeeze 1x1 (c/2 -> c/4) -> BN -> ReLU -> down 3x3/2 (-> c/2) -> BN -> ReLU
//!   +-> maxpool 3x3/2, pad 1
//!   -> concat (c) -> fuse 3x3 (c -> c) -> BN -> ReLU
//! ```

use super::layers::{bn, conv, conv_bn_relu, plan_conv_bn, Planner};
use crate::engine::{ConvSpec, Graph, Mode, PoolSpec, Var};
use crate::error::{shape_err, Error, Result};
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StemWidths {
    pub init: usize,
    pub squeeze: usize,
    pub out: usize,
}

impl StemWidths {
    pub fn for_output(out: usize) -> Result<Self> {
        if out == 0 || !out.is_multiple_of(4) {
            return Err(Error::InvalidConfig(format!(
                "stem output width {out} must be a positive multiple of 4"
            )));
        }
        Ok(Self {
            init: out / 2,
            squeeze: out / 4,
            out,
        })
    }
}

pub fn plan(p: &mut Planner, widths: StemWidths, hw: (usize, usize)) -> Result<(usize, usize)> {
    let half = plan_conv_bn(p, "stem.init", ConvSpec::new(3, widths.init, 3).stride(2), hw)?;
    plan_conv_bn(p, "stem.squeeze", ConvSpec::new(widths.init, widths.squeeze, 1), half)?;
    let quarter = plan_conv_bn(
        p,
        "stem.down",
        ConvSpec::new(widths.squeeze, widths.init, 3).stride(2),
        half,
    )?;
    plan_conv_bn(p, "stem.fuse", ConvSpec::new(2 * widths.init, widths.out, 3), quarter)
}

pub fn stem_forward(g: &mut Graph, store: &ParamStore, widths: StemWidths, x: Var, mode: Mode) -> Result<Var> {
    let [_, c, h, w] = g.value(x).shape();
    if c != 3 {
        return Err(shape_err("stem", format!("expected 3 input channels, got {c}")));
    }
    if h % 4 != 0 || w % 4 != 0 {
        return Err(shape_err("stem", format!("{h}x{w} input is not divisible by 4")));
    }
    let y = conv(
        g,
        store,
        "stem.init.conv",
        x,
        ConvSpec::new(3, widths.init, 3).stride(2),
    )?;
    let y = bn(g, store, "stem.init.bn", y, mode)?;

    let a = conv_bn_relu(
        g,
        store,
        "stem.squeeze",
        y,
        ConvSpec::new(widths.init, widths.squeeze, 1),
        mode,
    )?;
    let a = conv_bn_relu(
        g,
        store,
        "stem.down",
        a,
        ConvSpec::new(widths.squeeze, widths.init, 3).stride(2),
        mode,
    )?;
    let b = g.max_pool(y, PoolSpec::new(3, 2, 1))?;

    let cat = g.concat(&[a, b])?;
    conv_bn_relu(
        g,
        store,
        "stem.fuse",
        cat,
        ConvSpec::new(2 * widths.init, widths.out, 3),
        mode,
    )
}
