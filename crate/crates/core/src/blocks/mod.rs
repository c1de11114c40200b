//! Building blocks composed from engine operators.
//!
//! Every block comes as a pair: `plan` appends its parameterised layers to a
//! [`Planner`] (used for counting and initialization) and `*_forward` runs it
//! on a [`Graph`], reading parameters from a [`ParamStore`] by name.
//! Parameter names follow `<stage>.<block>.<unit>.<layer>.<tensor>`, e.g.
//! `s3.0.rr.conv.weight`.

pub mod config;
pub mod dwr;
pub mod head;
pub mod layers;
pub mod probe;
pub mod sir;
pub mod stem;

use serde::{Deserialize, Serialize};

pub use config::{DwrConfig, NonlinearitySwitches, ProbeConfig, SirConfig};
pub use dwr::dwr_forward;
pub use head::{seghead_forward, HeadConfig};
pub use layers::{LayerKind, ParamSlot, PlannedLayer, Planner};
pub use probe::probe_forward;
pub use sir::sir_forward;
pub use stem::{stem_forward, StemWidths};

use crate::engine::{Graph, Mode, Var};
use crate::error::Result;
use crate::params::ParamStore;

/// Any of the repeatable stage blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BlockConfig {
    Dwr(DwrConfig),
    Sir(SirConfig),
    Probe(ProbeConfig),
}

impl BlockConfig {
    pub fn channels(&self) -> usize {
        match self {
            BlockConfig::Dwr(c) => c.channels,
            BlockConfig::Sir(c) => c.channels,
            BlockConfig::Probe(c) => c.channels,
        }
    }

    pub fn stride(&self) -> usize {
        match self {
            BlockConfig::Dwr(c) => c.stride,
            BlockConfig::Sir(c) => c.stride,
            BlockConfig::Probe(c) => c.stride,
        }
    }

    pub fn plan(&self, p: &mut Planner, prefix: &str, hw: (usize, usize)) -> Result<(usize, usize)> {
        match self {
            BlockConfig::Dwr(c) => dwr::plan(p, prefix, c, hw),
            BlockConfig::Sir(c) => sir::plan(p, prefix, c, hw),
            BlockConfig::Probe(c) => probe::plan(p, prefix, c, hw),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, prefix: &str, x: Var, mode: Mode) -> Result<Var> {
        match self {
            BlockConfig::Dwr(c) => dwr_forward(g, store, prefix, c, x, mode),
            BlockConfig::Sir(c) => sir_forward(g, store, prefix, c, x, mode),
            BlockConfig::Probe(c) => probe_forward(g, store, prefix, c, x, mode),
        }
    }

    /// Standalone parameters for this block under `prefix`.
    pub fn build_store(&self, prefix: &str, seed: u64) -> Result<ParamStore> {
        let mut p = Planner::default();
        self.plan(&mut p, prefix, (64, 64))?;
        p.build_store(seed, 1e-5, 0.1)
    }
}
