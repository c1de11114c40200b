//! Run configuration: one JSON document describing model, data and recipe.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, Sample, ShapesSpec};
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, Variant};
use crate::training::{AugmentConfig, OhemConfig, SgdConfig, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;

/// First sample index of the synthetic validation split, far from the
/// training indices.
pub const VAL_INDEX_OFFSET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub variant: Variant,
    pub num_classes: usize,
    pub seed: u64,
    /// Build every block as a receptive-field probe.
    pub probe: bool,
    pub data: DataConfig,
    pub train: TrainSection,
    pub ohem: OhemConfig,
    pub augment: AugmentConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            variant: Variant::Tiny,
            num_classes: 4,
            seed: 0,
            probe: false,
            data: DataConfig::Shapes(ShapesData::default()),
            train: TrainSection::default(),
            ohem: OhemConfig::default(),
            augment: AugmentConfig::default(),
            out_dir: PathBuf::from("runs/dwrseg"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Shapes(ShapesData),
    Manifest(ManifestData),
}

/// Synthetic data: `train` samples from index 0 and `val` samples from
/// [`VAL_INDEX_OFFSET`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapesData {
    pub spec: ShapesSpec,
    pub train: usize,
    pub val: usize,
}

impl Default for ShapesData {
    fn default() -> Self {
        Self {
            spec: ShapesSpec::default(),
            train: 256,
            val: 64,
        }
    }
}

/// Directories of `name.ppm` / `name_mask.pgm` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestData {
    pub train: PathBuf,
    #[serde(default)]
    pub val: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub iters: usize,
    pub batch: usize,
    pub log_every: usize,
    /// Validation mIoU every this many iterations (0: only at the end).
    pub eval_every: usize,
    pub lr: f64,
    pub momentum: f32,
    pub weight_decay: f32,
    pub poly_power: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            iters: t.iters,
            batch: t.batch,
            log_every: t.log_every,
            eval_every: t.eval_every,
            lr: t.sgd.lr,
            momentum: t.sgd.momentum,
            weight_decay: t.sgd.weight_decay,
            poly_power: t.sgd.poly_power,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if let DataConfig::Shapes(s) = &self.data {
            s.spec.validate()?;
            if s.spec.num_classes != self.num_classes {
                return Err(Error::InvalidConfig(format!(
                    "data.shapes.spec.num_classes {} differs from num_classes {}",
                    s.spec.num_classes, self.num_classes
                )));
            }
        }
        self.network().validate()?;
        self.train_config().validate()
    }

    pub fn network(&self) -> NetworkConfig {
        let net = NetworkConfig::preset(self.variant, self.num_classes);
        if self.probe {
            net.with_probe()
        } else {
            net
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iters: self.train.iters,
            batch: self.train.batch,
            log_every: self.train.log_every,
            eval_every: self.train.eval_every,
            sgd: SgdConfig {
                lr: self.train.lr,
                momentum: self.train.momentum,
                weight_decay: self.train.weight_decay,
                poly_power: self.train.poly_power,
            },
            ohem: self.ohem,
            augment: self.augment.clone(),
            seed: self.seed,
        }
    }

    /// Training and validation samples.
    pub fn datasets(&self) -> Result<(Vec<Sample>, Vec<Sample>)> {
        match &self.data {
            DataConfig::Shapes(s) => Ok((
                s.spec.generate_range(0, s.train)?,
                s.spec.generate_range(VAL_INDEX_OFFSET, s.val)?,
            )),
            DataConfig::Manifest(m) => {
                let train = load_dataset(&m.train)?;
                let val = match &m.val {
                    Some(dir) => load_dataset(dir)?,
                    None => Vec::new(),
                };
                Ok((train, val))
            }
        }
    }
}
