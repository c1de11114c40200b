use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optional nonlinearities inside a DWR block. Each flag toggles one of the
/// ablation switches; the defaults are the baseline block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearitySwitches {
    /// ReLU after region residualization (off: switch 1).
    pub rr_relu: bool,
    /// BN after the region residualization conv (off: switch 2).
    pub rr_bn: bool,
    /// BN after the semantic residualization concat (off: switch 3).
    pub sr_bn: bool,
    /// ReLU after the semantic residualization BN (on: switch 4).
    pub sr_relu_after_bn: bool,
    /// BN after the pointwise merge (on: switch 5).
    pub bn_after_pointwise: bool,
}

impl Default for NonlinearitySwitches {
    fn default() -> Self {
        Self {
            rr_relu: true,
            rr_bn: true,
            sr_bn: true,
            sr_relu_after_bn: false,
            bn_after_pointwise: false,
        }
    }
}

impl NonlinearitySwitches {
    /// The baseline with ablation switch `n` (1..=5) applied.
    pub fn switch(n: u8) -> Result<Self> {
        let mut s = Self::default();
        match n {
            1 => s.rr_relu = false,
            2 => s.rr_bn = false,
            3 => s.sr_bn = false,
            4 => s.sr_relu_after_bn = true,
            5 => s.bn_after_pointwise = true,
            _ => return Err(Error::InvalidConfig(format!("no nonlinearity switch {n}"))),
        }
        Ok(s)
    }
}

/// Width of the region-residualization output, `beta * channels`, which must
/// be a whole number.
pub fn expanded_width(channels: usize, beta: f64) -> Result<usize> {
    let w = beta * channels as f64;
    if !(beta > 0.0) || (w - w.round()).abs() > 1e-9 || w.round() < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "expansion {beta} x {channels} channels is not a positive integer width"
        )));
    }
    Ok(w.round() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwrConfig {
    pub channels: usize,
    pub in_channels: usize,
    pub stride: usize,
    pub dilations: Vec<usize>,
    /// Relative channel share of each branch.
    pub ratios: Vec<usize>,
    pub rr_expansion: f64,
    #[serde(default)]
    pub switches: NonlinearitySwitches,
}

impl DwrConfig {
    /// Baseline block: dilations (1, 3) / (1, 3, 5), ratios 2:1 / 2:1:1,
    /// expansion 1.5.
    pub fn new(channels: usize, branches: usize) -> Result<Self> {
        let (dilations, ratios) = match branches {
            2 => (vec![1, 3], vec![2, 1]),
            3 => (vec![1, 3, 5], vec![2, 1, 1]),
            b => return Err(Error::InvalidConfig(format!("DWR supports 2 or 3 branches, got {b}"))),
        };
        Ok(Self {
            channels,
            in_channels: channels,
            stride: 1,
            dilations,
            ratios,
            rr_expansion: 1.5,
            switches: NonlinearitySwitches::default(),
        })
    }

    /// First block of a stage: stride 2 from `in_channels`.
    pub fn downsampling(mut self, in_channels: usize) -> Self {
        self.in_channels = in_channels;
        self.stride = 2;
        self
    }

    pub fn branches(&self) -> usize {
        self.dilations.len()
    }

    pub fn rr_width(&self) -> Result<usize> {
        expanded_width(self.channels, self.rr_expansion)
    }

    /// Channel count handed to each dilated branch.
    pub fn group_widths(&self) -> Result<Vec<usize>> {
        let rr = self.rr_width()?;
        let total: usize = self.ratios.iter().sum();
        let widths: Vec<usize> = self.ratios.iter().map(|r| rr * r / total).collect();
        if total == 0 || widths.iter().sum::<usize>() != rr || widths.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "width {rr} does not split into ratios {:?}",
                self.ratios
            )));
        }
        for (w, r) in widths.iter().zip(&self.ratios) {
            if w * total != rr * r {
                return Err(Error::InvalidConfig(format!(
                    "width {rr} does not split exactly into ratios {:?}",
                    self.ratios
                )));
            }
        }
        Ok(widths)
    }

    pub fn has_shortcut(&self) -> bool {
        self.stride == 1 && self.in_channels == self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.in_channels == 0 {
            return Err(Error::InvalidConfig("DWR channel counts must be positive".into()));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::InvalidConfig(format!("DWR stride {} not in {{1, 2}}", self.stride)));
        }
        if self.stride == 1 && self.in_channels != self.channels {
            return Err(Error::InvalidConfig(
                "DWR in_channels may differ from channels only when stride is 2".into(),
            ));
        }
        if !matches!(self.branches(), 2 | 3) || self.ratios.len() != self.branches() {
            return Err(Error::InvalidConfig(
                "DWR needs 2 or 3 branches with one ratio per dilation".into(),
            ));
        }
        if self.dilations.contains(&0) {
            return Err(Error::InvalidConfig("dilation rates must be positive".into()));
        }
        self.group_widths().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirConfig {
    pub channels: usize,
    pub in_channels: usize,
    pub stride: usize,
    pub expansion: usize,
}

impl SirConfig {
    pub fn new(channels: usize, expansion: usize) -> Self {
        Self {
            channels,
            in_channels: channels,
            stride: 1,
            expansion,
        }
    }

    pub fn downsampling(mut self, in_channels: usize) -> Self {
        self.in_channels = in_channels;
        self.stride = 2;
        self
    }

    pub fn hidden_width(&self) -> usize {
        self.expansion * self.channels
    }

    pub fn has_shortcut(&self) -> bool {
        self.stride == 1 && self.in_channels == self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.in_channels == 0 || self.expansion == 0 {
            return Err(Error::InvalidConfig("SIR sizes must be positive".into()));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::InvalidConfig(format!("SIR stride {} not in {{1, 2}}", self.stride)));
        }
        if self.stride == 1 && self.in_channels != self.channels {
            return Err(Error::InvalidConfig(
                "SIR in_channels may differ from channels only when stride is 2".into(),
            ));
        }
        Ok(())
    }
}

/// Receptive-field demand probe: every dilation reads the whole region map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub channels: usize,
    pub in_channels: usize,
    pub stride: usize,
    pub dilations: Vec<usize>,
    pub rr_expansion: f64,
}

impl ProbeConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            in_channels: channels,
            stride: 1,
            dilations: vec![1, 3, 5],
            rr_expansion: 1.5,
        }
    }

    pub fn downsampling(mut self, in_channels: usize) -> Self {
        self.in_channels = in_channels;
        self.stride = 2;
        self
    }

    pub fn rr_width(&self) -> Result<usize> {
        expanded_width(self.channels, self.rr_expansion)
    }

    /// Input width of the pointwise merge: one full region map per branch.
    pub fn concat_width(&self) -> Result<usize> {
        Ok(self.dilations.len() * self.rr_width()?)
    }

    /// Input-channel range of the pointwise weight fed by each branch.
    pub fn branch_ranges(&self) -> Result<Vec<std::ops::Range<usize>>> {
        let rr = self.rr_width()?;
        Ok((0..self.dilations.len()).map(|i| i * rr..(i + 1) * rr).collect())
    }

    pub fn has_shortcut(&self) -> bool {
        self.stride == 1 && self.in_channels == self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.in_channels == 0 || self.dilations.is_empty() {
            return Err(Error::InvalidConfig("probe sizes must be positive".into()));
        }
        if !matches!(self.stride, 1 | 2) || (self.stride == 1 && self.in_channels != self.channels) {
            return Err(Error::InvalidConfig("invalid probe stride/in_channels".into()));
        }
        if self.dilations.contains(&0) {
            return Err(Error::InvalidConfig("dilation rates must be positive".into()));
        }
        self.rr_width().map(|_| ())
    }
}
