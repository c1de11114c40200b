use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockConfig, DwrConfig, HeadConfig, NonlinearitySwitches, ProbeConfig, SirConfig};
use crate::error::{Error, Result};

/// Stage names in order of decreasing resolution (1/8, 1/16, 1/32).
pub const STAGE_NAMES: [&str; 3] = ["s2", "s3", "s4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "B")]
    B,
    #[serde(rename = "L")]
    L,
    #[serde(rename = "tiny")]
    Tiny,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::B, Variant::L, Variant::Tiny];

    /// Published parameter and MAC figures (MACs at 3x512x1024), where they exist.
    pub fn reference(self) -> Option<Reference> {
        match self {
            Variant::B => Some(Reference {
                params: 2.54e6,
                macs: 13.62e9,
            }),
            Variant::L => Some(Reference {
                params: 3.53e6,
                macs: 16.42e9,
            }),
            Variant::Tiny => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::B => "B",
            Variant::L => "L",
            Variant::Tiny => "tiny",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" | "b" => Ok(Variant::B),
            "L" | "l" => Ok(Variant::L),
            "tiny" | "TINY" | "Tiny" => Ok(Variant::Tiny),
            _ => Err(Error::InvalidConfig(format!("unknown variant {s:?} (expected B, L or tiny)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reference {
    pub params: f64,
    pub macs: f64,
}

/// Block family used by a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageBlock {
    Sir { expansion: usize },
    Dwr { branches: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub block: StageBlock,
    pub channels: usize,
    pub repeats: usize,
}

fn default_rr_expansion() -> f64 {
    1.5
}

fn default_probe_dilations() -> Vec<usize> {
    vec![1, 3, 5]
}

fn default_bn_eps() -> f32 {
    1e-5
}

fn default_bn_momentum() -> f32 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub num_classes: usize,
    pub stem_channels: usize,
    pub stages: [StageConfig; 3],
    /// Added to each stage's repeat count.
    #[serde(default)]
    pub block_offsets: [i64; 3],
    pub head_channels: usize,
    #[serde(default = "default_rr_expansion")]
    pub rr_expansion: f64,
    #[serde(default)]
    pub switches: NonlinearitySwitches,
    /// Replace every block by a receptive-field probe block.
    #[serde(default)]
    pub probe: bool,
    #[serde(default = "default_probe_dilations")]
    pub probe_dilations: Vec<usize>,
    #[serde(default = "default_bn_eps")]
    pub bn_eps: f32,
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f32,
}

impl NetworkConfig {
    pub fn preset(variant: Variant, num_classes: usize) -> Self {
        let (stem, widths, repeats, head) = match variant {
            Variant::B => (64, [64, 128, 128], [7, 3, 3], 128),
            Variant::L => (64, [64, 128, 128], [8, 8, 3], 128),
            Variant::Tiny => (16, [16, 32, 32], [2, 2, 2], 32),
        };
        let kinds = [
            StageBlock::Sir { expansion: 3 },
            StageBlock::Dwr { branches: 2 },
            StageBlock::Dwr { branches: 3 },
        ];
        let stages = [0, 1, 2].map(|i| StageConfig {
            block: kinds[i],
            channels: widths[i],
            repeats: repeats[i],
        });
        Self {
            variant,
            num_classes,
            stem_channels: stem,
            stages,
            block_offsets: [0; 3],
            head_channels: head,
            rr_expansion: default_rr_expansion(),
            switches: NonlinearitySwitches::default(),
            probe: false,
            probe_dilations: default_probe_dilations(),
            bn_eps: default_bn_eps(),
            bn_momentum: default_bn_momentum(),
        }
    }

    pub fn with_probe(mut self) -> Self {
        self.probe = true;
        self
    }

    /// Effective number of blocks in stage `i` (offset applied).
    pub fn repeats(&self, i: usize) -> Result<usize> {
        let r = self.stages[i].repeats as i64 + self.block_offsets[i];
        if r < 1 {
            return Err(Error::InvalidConfig(format!(
                "stage {} ends up with {r} blocks",
                STAGE_NAMES[i]
            )));
        }
        Ok(r as usize)
    }

    /// Channel width of the decoder concat (sum of the three stage widths).
    pub fn decoder_width(&self) -> usize {
        self.stages.iter().map(|s| s.channels).sum()
    }

    pub fn head(&self) -> HeadConfig {
        HeadConfig {
            in_channels: self.decoder_width(),
            mid_channels: self.head_channels,
            num_classes: self.num_classes,
        }
    }

    /// All blocks in execution order, with their parameter prefix.
    pub fn blocks(&self) -> Result<Vec<(String, BlockConfig)>> {
        let mut out = Vec::new();
        let mut in_ch = self.stem_channels;
        for (i, stage) in self.stages.iter().enumerate() {
            for j in 0..self.repeats(i)? {
                let c = stage.channels;
                let cfg = if self.probe {
                    let mut p = ProbeConfig::new(c);
                    p.dilations = self.probe_dilations.clone();
                    p.rr_expansion = self.rr_expansion;
                    BlockConfig::Probe(if j == 0 { p.downsampling(in_ch) } else { p })
                } else {
                    match stage.block {
                        StageBlock::Sir { expansion } => {
                            let s = SirConfig::new(c, expansion);
                            BlockConfig::Sir(if j == 0 { s.downsampling(in_ch) } else { s })
                        }
                        StageBlock::Dwr { branches } => {
                            let mut d = DwrConfig::new(c, branches)?;
                            d.rr_expansion = self.rr_expansion;
                            d.switches = self.switches;
                            BlockConfig::Dwr(if j == 0 { d.downsampling(in_ch) } else { d })
                        }
                    }
                };
                out.push((format!("{}.{j}", STAGE_NAMES[i]), cfg));
            }
            in_ch = stage.channels;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be at least 2".into()));
        }
        if self.head_channels == 0 {
            return Err(Error::InvalidConfig("head_channels must be positive".into()));
        }
        if !(self.bn_eps > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(Error::InvalidConfig("bn_eps must be > 0 and bn_momentum in (0, 1]".into()));
        }
        crate::blocks::StemWidths::for_output(self.stem_channels)?;
        for (_, b) in self.blocks()? {
            match &b {
                BlockConfig::Dwr(c) => c.validate()?,
                BlockConfig::Sir(c) => c.validate()?,
                BlockConfig::Probe(c) => c.validate()?,
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_follow_stage_table() {
        let b = NetworkConfig::preset(Variant::B, 19);
        assert_eq!(b.stages.map(|s| s.repeats), [7, 3, 3]);
        assert_eq!(NetworkConfig::preset(Variant::L, 19).stages.map(|s| s.repeats), [8, 8, 3]);
        assert_eq!(b.decoder_width(), 320);
        let blocks = b.blocks().unwrap();
        assert_eq!(blocks.len(), 13);
        assert_eq!(blocks[0].0, "s2.0");
        assert_eq!(blocks[7].0, "s3.0");
        assert!(matches!(&blocks[7].1, BlockConfig::Dwr(d) if d.in_channels == 64 && d.stride == 2));
        assert!(matches!(&blocks[12].1, BlockConfig::Dwr(d) if d.dilations == vec![1, 3, 5]));
        b.validate().unwrap();
        NetworkConfig::preset(Variant::Tiny, 4).validate().unwrap();
        NetworkConfig::preset(Variant::Tiny, 4).with_probe().validate().unwrap();
    }

    #[test]
    fn offsets_and_json() {
        let mut cfg = NetworkConfig::preset(Variant::B, 19);
        cfg.block_offsets = [-1, 2, 0];
        assert_eq!(cfg.blocks().unwrap().len(), 14);
        let back = NetworkConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        cfg.block_offsets = [-7, 0, 0];
        assert!(cfg.validate().is_err());
        assert!(NetworkConfig::from_json(r#"{"variant":"B","bogus":1}"#).is_err());
        assert_eq!("tiny".parse::<Variant>().unwrap(), Variant::Tiny);
        assert!("XL".parse::<Variant>().is_err());
    }
}
