use super::config::{NetworkConfig, STAGE_NAMES};
use crate::blocks::{head, layers::bn, seghead_forward, stem, stem_forward, Planner, StemWidths};
use crate::engine::{Graph, Mode, Tensor, Var};
use crate::error::{shape_err, Result};
use crate::params::ParamStore;

fn check_input(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_multiple_of(32) || !w.is_multiple_of(32) {
        return Err(shape_err("network", format!("input {h}x{w} is not divisible by 32")));
    }
    Ok(())
}

/// Static layer plan of the whole network for an `h x w` input.
pub fn plan(cfg: &NetworkConfig, h: usize, w: usize) -> Result<Planner> {
    cfg.validate()?;
    check_input(h, w)?;
    let mut p = Planner::default();
    let mut hw = stem::plan(&mut p, StemWidths::for_output(cfg.stem_channels)?, (h, w))?;
    let mut eighth = hw;
    for (prefix, block) in cfg.blocks()? {
        hw = block.plan(&mut p, &prefix, hw)?;
        if prefix.starts_with("s2.") {
            eighth = hw;
        }
    }
    p.bn("decoder.bn", cfg.decoder_width(), eighth);
    head::plan(&mut p, "head", cfg.head(), eighth)?;
    Ok(p)
}

/// Allocates a freshly initialized parameter store.
pub fn build(cfg: &NetworkConfig, seed: u64) -> Result<ParamStore> {
    plan(cfg, 32, 32)?.build_store(seed, cfg.bn_eps, cfg.bn_momentum)
}

pub struct ForwardOutput {
    /// `(n, num_classes, h, w)` raw scores.
    pub logits: Var,
    /// Stage outputs at 1/8, 1/16 and 1/32 resolution.
    pub taps: [Var; 3],
}

/// Runs the network on `x` (`(n, 3, h, w)`, `h` and `w` divisible by 32).
/// Stage outputs are also marked on the graph as `s2`, `s3`, `s4`.
pub fn forward(g: &mut Graph, store: &ParamStore, cfg: &NetworkConfig, x: Var, mode: Mode) -> Result<ForwardOutput> {
    let [_, c, h, w] = g.value(x).shape();
    if c != 3 {
        return Err(shape_err("network", format!("expected 3 input channels, got {c}")));
    }
    check_input(h, w)?;
    let mut y = stem_forward(g, store, StemWidths::for_output(cfg.stem_channels)?, x, mode)?;
    let blocks = cfg.blocks()?;
    let mut taps = Vec::with_capacity(3);
    for (i, stage) in STAGE_NAMES.iter().enumerate() {
        let prefix = format!("{stage}.");
        for (name, block) in blocks.iter().filter(|(n, _)| n.starts_with(&prefix)) {
            y = block.forward(g, store, name, y, mode)?;
        }
        g.mark(STAGE_NAMES[i], y);
        taps.push(y);
    }
    let (eh, ew) = (h / 8, w / 8);
    let mid = g.upsample(taps[1], eh, ew)?;
    let deep = g.upsample(taps[2], eh, ew)?;
    let cat = g.concat(&[taps[0], mid, deep])?;
    let cat = bn(g, store, "decoder.bn", cat, mode)?;
    let logits = seghead_forward(g, store, "head", cfg.head(), cat, h, w, mode)?;
    Ok(ForwardOutput {
        logits,
        taps: [taps[0], taps[1], taps[2]],
    })
}

/// Eval-mode forward on a forward-only graph: logits and the three stage taps.
pub fn infer(store: &ParamStore, cfg: &NetworkConfig, x: &Tensor) -> Result<(Tensor, [Tensor; 3])> {
    let mut g = Graph::inference();
    let xv = g.input(x.clone());
    let out = forward(&mut g, store, cfg, xv, Mode::Eval)?;
    let taps = out.taps.map(|t| g.value(t).clone());
    Ok((g.take_value(out.logits), taps))
}
