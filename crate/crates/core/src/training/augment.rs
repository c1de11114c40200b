use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Mask, Sample, IGNORE_LABEL};
use crate::engine::resize::resize_bilinear;
use crate::engine::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropSize {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Random resize factor range `[min, max]`.
    pub scale_range: [f32; 2],
    /// Output size; `None` keeps the input size.
    pub crop: Option<CropSize>,
    pub hflip_prob: f64,
    /// Jitter amplitudes: each factor is drawn from `[1 - a, 1 + a]`.
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    /// Image fill used when padding up to the crop size.
    pub pad_value: [f32; 3],
    pub ignore_label: u8,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_range: [0.25, 1.5],
            crop: None,
            hflip_prob: 0.5,
            brightness: 0.3,
            contrast: 0.3,
            saturation: 0.3,
            pad_value: [0.485, 0.456, 0.406],
            ignore_label: IGNORE_LABEL,
        }
    }
}

impl AugmentConfig {
    /// A configuration that leaves samples untouched.
    pub fn identity() -> Self {
        Self {
            scale_range: [1.0, 1.0],
            crop: None,
            hflip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidConfig("augment: scale_range must satisfy 0 < min <= max".into()));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::InvalidConfig("augment: hflip_prob must be in [0, 1]".into()));
        }
        if [self.brightness, self.contrast, self.saturation].iter().any(|a| !(0.0..1.0).contains(a)) {
            return Err(Error::InvalidConfig("augment: jitter amplitudes must be in [0, 1)".into()));
        }
        if matches!(self.crop, Some(c) if c.width == 0 || c.height == 0) {
            return Err(Error::InvalidConfig("augment: empty crop".into()));
        }
        Ok(())
    }
}

/// Nearest-neighbour resize of a label mask (half-pixel centres).
pub fn resize_mask(mask: &Mask, out_h: usize, out_w: usize) -> Mask {
    let src = |o: usize, out: usize, inp: usize| (((o as f64 + 0.5) * inp as f64 / out as f64) as usize).min(inp - 1);
    let mut out = Mask::new(out_h, out_w, 0);
    for y in 0..out_h {
        let sy = src(y, out_h, mask.h);
        for x in 0..out_w {
            out.set(y, x, mask.at(sy, src(x, out_w, mask.w)));
        }
    }
    out
}

pub fn hflip(sample: &Sample) -> Sample {
    let (h, w) = (sample.height(), sample.width());
    let mut image = sample.image.clone();
    let mut mask = sample.mask.clone();
    for row in image.data_mut().chunks_mut(w) {
        row.reverse();
    }
    for row in mask.data.chunks_mut(w) {
        row.reverse();
    }
    debug_assert_eq!(mask.data.len(), h * w);
    Sample { image, mask }
}

fn pad_to(sample: &Sample, h: usize, w: usize, fill: [f32; 3], ignore: u8) -> Sample {
    let (sh, sw) = (sample.height(), sample.width());
    if sh >= h && sw >= w {
        return sample.clone();
    }
    let (ph, pw) = (sh.max(h), sw.max(w));
    let mut image = Tensor::zeros([1, 3, ph, pw]);
    let mut mask = Mask::new(ph, pw, ignore);
    for c in 0..3 {
        for y in 0..ph {
            for x in 0..pw {
                let v = if y < sh && x < sw { sample.image.at(0, c, y, x) } else { fill[c] };
                image.set(0, c, y, x, v);
            }
        }
    }
    for y in 0..sh {
        for x in 0..sw {
            mask.set(y, x, sample.mask.at(y, x));
        }
    }
    Sample { image, mask }
}

fn crop(sample: &Sample, y0: usize, x0: usize, h: usize, w: usize) -> Sample {
    if (y0, x0, h, w) == (0, 0, sample.height(), sample.width()) {
        return sample.clone();
    }
    let mut image = Tensor::zeros([1, 3, h, w]);
    let mut mask = Mask::new(h, w, 0);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                image.set(0, c, y, x, sample.image.at(0, c, y0 + y, x0 + x));
            }
            mask.set(y, x, sample.mask.at(y0 + y, x0 + x));
        }
    }
    Sample { image, mask }
}

fn factor(amplitude: f32, rng: &mut impl Rng) -> Option<f32> {
    (amplitude > 0.0).then(|| rng.gen_range(1.0 - amplitude..=1.0 + amplitude))
}

fn jitter(image: &mut Tensor, cfg: &AugmentConfig, rng: &mut impl Rng) {
    let plane = image.h() * image.w();
    let b = factor(cfg.brightness, rng);
    let c = factor(cfg.contrast, rng);
    let s = factor(cfg.saturation, rng);
    let d = image.data_mut();
    if let Some(b) = b {
        d.iter_mut().for_each(|v| *v = (*v * b).clamp(0.0, 1.0));
    }
    let gray = |d: &[f32], i: usize| 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
    if let Some(c) = c {
        let mean = (0..plane).map(|i| gray(d, i) as f64).sum::<f64>() as f32 / plane as f32;
        d.iter_mut().for_each(|v| *v = ((*v - mean) * c + mean).clamp(0.0, 1.0));
    }
    if let Some(s) = s {
        for i in 0..plane {
            let g = gray(d, i);
            for ch in 0..3 {
                let v = &mut d[ch * plane + i];
                *v = (g + (*v - g) * s).clamp(0.0, 1.0);
            }
        }
    }
}

/// Random resize (bilinear image, nearest mask), pad up to the crop size
/// with (`pad_value`, ignore), random crop, horizontal flip and colour
/// jitter on the image. Deterministic given the state of `rng`.
pub fn augment(sample: &Sample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<Sample> {
    cfg.validate()?;
    let (h, w) = (sample.height(), sample.width());
    let [lo, hi] = cfg.scale_range;
    let scale = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
    let nh = ((h as f32 * scale).round() as usize).max(1);
    let nw = ((w as f32 * scale).round() as usize).max(1);
    let mut s = if (nh, nw) == (h, w) {
        sample.clone()
    } else {
        Sample {
            image: resize_bilinear(&sample.image, nh, nw)?,
            mask: resize_mask(&sample.mask, nh, nw),
        }
    };

    let (ch, cw) = cfg.crop.map_or((h, w), |c| (c.height, c.width));
    s = pad_to(&s, ch, cw, cfg.pad_value, cfg.ignore_label);
    let y0 = rng.gen_range(0..=s.height() - ch);
    let x0 = rng.gen_range(0..=s.width() - cw);
    s = crop(&s, y0, x0, ch, cw);

    if cfg.hflip_prob > 0.0 && rng.gen_bool(cfg.hflip_prob) {
        s = hflip(&s);
    }
    jitter(&mut s.image, cfg, rng);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ShapesSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_config_is_bitwise_noop() {
        let s = ShapesSpec::default().generate(1).unwrap();
        let out = augment(&s, &AugmentConfig::identity(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.image.bitwise_eq(&s.image));
        assert_eq!(out.mask, s.mask);
    }

    #[test]
    fn flip_twice_is_identity() {
        let s = ShapesSpec::default().generate(2).unwrap();
        let back = hflip(&hflip(&s));
        assert!(back.image.bitwise_eq(&s.image) && back.mask == s.mask);
        assert_ne!(hflip(&s).mask, s.mask);
    }

    #[test]
    fn seeded_augmentation_reproduces() {
        let s = ShapesSpec::default().generate(3).unwrap();
        let cfg = AugmentConfig {
            crop: Some(CropSize { width: 48, height: 40 }),
            ..AugmentConfig::default()
        };
        let a = augment(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = augment(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(a.image.bitwise_eq(&b.image) && a.mask == b.mask);
        assert_eq!((a.height(), a.width()), (40, 48));
        assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        a.mask.validate(4).unwrap();
    }

    #[test]
    fn downscale_pads_with_ignore() {
        let s = ShapesSpec::default().generate(4).unwrap();
        let cfg = AugmentConfig {
            scale_range: [0.5, 0.5],
            hflip_prob: 0.0,
            ..AugmentConfig::identity()
        };
        let out = augment(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.mask.at(63, 63), IGNORE_LABEL);
        assert_eq!(out.mask.at(0, 0), s.mask.at(1, 1));
        assert_eq!(out.image.at(0, 0, 63, 63), cfg.pad_value[0]);
    }
}
