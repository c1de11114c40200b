//! Synthetic scenes of flat-coloured geometric shapes.
//!
//! Class 0 is background; shape class `k >= 1` is drawn as
//! [`ShapeKind::for_class`]`(k)` in palette colour `k`. Geometry is tested at
//! pixel centres `(y + 0.5, x + 0.5)` using only additions, multiplications
//! and comparisons, so scenes are bit-identical on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::{Mask, Sample};
use crate::engine::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle,
    Disk,
    Triangle,
    Ring,
}

impl ShapeKind {
    pub fn for_class(class: u8) -> Self {
        const KINDS: [ShapeKind; 4] = [ShapeKind::Rectangle, ShapeKind::Disk, ShapeKind::Triangle, ShapeKind::Ring];
        KINDS[(class.max(1) as usize - 1) % 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Half-open box `[y0, y1) x [x0, x1)`.
    Rectangle { y0: f32, x0: f32, y1: f32, x1: f32 },
    Disk { cy: f32, cx: f32, r: f32 },
    Triangle { v: [[f32; 2]; 3] },
    Ring { cy: f32, cx: f32, r_in: f32, r_out: f32 },
}

fn edge(a: [f32; 2], b: [f32; 2], p: [f32; 2]) -> f32 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

impl Geometry {
    /// Whether the point `(y, x)` is covered.
    pub fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Geometry::Rectangle { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Geometry::Disk { cy, cx, r } => {
                let (dy, dx) = (y - cy, x - cx);
                dy * dy + dx * dx <= r * r
            }
            Geometry::Ring { cy, cx, r_in, r_out } => {
                let (dy, dx) = (y - cy, x - cx);
                let d2 = dy * dy + dx * dx;
                d2 <= r_out * r_out && d2 >= r_in * r_in
            }
            Geometry::Triangle { v } => {
                let p = [y, x];
                let e = [edge(v[0], v[1], p), edge(v[1], v[2], p), edge(v[2], v[0], p)];
                e.iter().all(|&s| s >= 0.0) || e.iter().all(|&s| s <= 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub class: u8,
    pub geometry: Geometry,
}

/// RGB colour of a class.
pub fn palette(class: u8) -> [f32; 3] {
    const P: [[f32; 3]; 8] = [
        [0.15, 0.15, 0.20],
        [0.90, 0.20, 0.20],
        [0.20, 0.80, 0.25],
        [0.25, 0.35, 0.95],
        [0.95, 0.85, 0.20],
        [0.85, 0.25, 0.90],
        [0.20, 0.85, 0.90],
        [0.95, 0.60, 0.25],
    ];
    P[class as usize % P.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapesSpec {
    pub height: usize,
    pub width: usize,
    /// Background plus `num_classes - 1` shape classes.
    pub num_classes: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Shape extent as a fraction of the shorter canvas side.
    pub min_size: f32,
    pub max_size: f32,
    /// Amplitude of uniform per-pixel colour noise.
    pub noise: f32,
    pub seed: u64,
}

impl Default for ShapesSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            num_classes: 4,
            min_shapes: 1,
            max_shapes: 3,
            min_size: 0.3,
            max_size: 0.7,
            noise: 0.08,
            seed: 0,
        }
    }
}

impl ShapesSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > 255 {
            return Err(Error::InvalidConfig("shapes: num_classes must be in 2..=255".into()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidConfig("shapes: empty canvas".into()));
        }
        if self.min_shapes > self.max_shapes || !(self.min_size > 0.0 && self.min_size <= self.max_size) {
            return Err(Error::InvalidConfig("shapes: inverted count or size range".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidConfig("shapes: noise must be in [0, 1]".into()));
        }
        Ok(())
    }

    fn random_shape(&self, rng: &mut ChaCha8Rng) -> Shape {
        let class = rng.gen_range(1..self.num_classes) as u8;
        let side = self.height.min(self.width) as f32;
        let size = rng.gen_range(self.min_size..=self.max_size) * side;
        let cy = rng.gen_range(0.0..self.height as f32);
        let cx = rng.gen_range(0.0..self.width as f32);
        let r = 0.5 * size;
        let geometry = match ShapeKind::for_class(class) {
            ShapeKind::Rectangle => {
                let aspect = rng.gen_range(0.5f32..=1.0);
                let (hh, hw) = if rng.gen::<bool>() { (r, r * aspect) } else { (r * aspect, r) };
                Geometry::Rectangle {
                    y0: cy - hh,
                    x0: cx - hw,
                    y1: cy + hh,
                    x1: cx + hw,
                }
            }
            ShapeKind::Disk => Geometry::Disk { cy, cx, r },
            ShapeKind::Ring => Geometry::Ring {
                cy,
                cx,
                r_in: 0.5 * r,
                r_out: r,
            },
            ShapeKind::Triangle => {
                // apex in one of four directions, base opposite
                let (apex, b0, b1) = match rng.gen_range(0..4) {
                    0 => ([cy - r, cx], [cy + r, cx - r], [cy + r, cx + r]),
                    1 => ([cy + r, cx], [cy - r, cx - r], [cy - r, cx + r]),
                    2 => ([cy, cx - r], [cy - r, cx + r], [cy + r, cx + r]),
                    _ => ([cy, cx + r], [cy - r, cx - r], [cy + r, cx - r]),
                };
                Geometry::Triangle { v: [apex, b0, b1] }
            }
        };
        Shape { class, geometry }
    }

    /// The shapes of scene `index`, back to front.
    pub fn layout(&self, index: u64) -> Vec<Shape> {
        let mut rng = self.rng(index);
        let count = rng.gen_range(self.min_shapes..=self.max_shapes);
        (0..count).map(|_| self.random_shape(&mut rng)).collect()
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Scene `index`; a pure function of `(seed, index)`.
    pub fn generate(&self, index: u64) -> Result<Sample> {
        self.validate()?;
        let shapes = self.layout(index);
        let mut rng = self.rng(index);
        // skip the draws used by layout so noise is independent of it
        rng.set_word_pos(1 << 32);
        render(self.height, self.width, &shapes, self.noise, &mut rng)
    }

    /// Scenes `start..start + count`, generated in parallel.
    pub fn generate_range(&self, start: u64, count: usize) -> Result<Vec<Sample>> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.generate(start + i))
            .collect()
    }
}

/// Draws `shapes` back to front over background, then adds uniform
/// per-pixel noise in `[-noise, noise]` drawn from `rng` in row-major,
/// channel-last order and clamps to `[0, 1]`.
pub fn render(h: usize, w: usize, shapes: &[Shape], noise: f32, rng: &mut impl Rng) -> Result<Sample> {
    let mut mask = Mask::new(h, w, 0);
    for s in shapes {
        for y in 0..h {
            for x in 0..w {
                if s.geometry.contains(y as f32 + 0.5, x as f32 + 0.5) {
                    mask.set(y, x, s.class);
                }
            }
        }
    }
    let mut image = Tensor::zeros([1, 3, h, w]);
    let plane = h * w;
    let data = image.data_mut();
    for (i, &class) in mask.data.iter().enumerate() {
        let base = palette(class);
        for (c, &b) in base.iter().enumerate() {
            let n = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
            data[c * plane + i] = (b + n).clamp(0.0, 1.0);
        }
    }
    Sample::new(image, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_square_covers_64_pixels() {
        let shapes = [Shape {
            class: 1,
            geometry: Geometry::Rectangle {
                y0: 4.0,
                x0: 4.0,
                y1: 12.0,
                x1: 12.0,
            },
        }];
        let s = render(16, 16, &shapes, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.mask.data.iter().filter(|&&v| v == 1).count(), 64);
        assert_eq!(s.mask.at(4, 4), 1);
        assert_eq!(s.mask.at(3, 4), 0);
        assert_eq!(s.mask.at(11, 11), 1);
        assert_eq!(s.mask.at(12, 11), 0);
        assert_eq!(s.image.at(0, 0, 8, 8), palette(1)[0]);
    }

    #[test]
    fn later_shapes_cover_earlier_ones() {
        let big = Shape {
            class: 1,
            geometry: Geometry::Disk { cy: 8.0, cx: 8.0, r: 6.0 },
        };
        let small = Shape {
            class: 2,
            geometry: Geometry::Rectangle {
                y0: 6.0,
                x0: 6.0,
                y1: 10.0,
                x1: 10.0,
            },
        };
        let s = render(16, 16, &[big, small], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.mask.at(7, 7), 2);
        assert_eq!(s.mask.at(8, 3), 1);
    }

    #[test]
    fn ring_and_triangle_geometry() {
        let ring = Geometry::Ring {
            cy: 0.0,
            cx: 0.0,
            r_in: 1.0,
            r_out: 2.0,
        };
        assert!(!ring.contains(0.0, 0.5));
        assert!(ring.contains(0.0, 1.5));
        assert!(!ring.contains(0.0, 2.5));
        let tri = Geometry::Triangle {
            v: [[0.0, 2.0], [4.0, 0.0], [4.0, 4.0]],
        };
        assert!(tri.contains(3.0, 2.0));
        assert!(!tri.contains(0.5, 0.2));
    }

    #[test]
    fn zero_shapes_give_background() {
        let spec = ShapesSpec {
            min_shapes: 0,
            max_shapes: 0,
            ..ShapesSpec::default()
        };
        let s = spec.generate(3).unwrap();
        assert!(s.mask.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn generation_is_reproducible_and_valid() {
        let spec = ShapesSpec::default();
        let a = spec.generate(5).unwrap();
        let b = spec.generate(5).unwrap();
        assert!(a.image.bitwise_eq(&b.image) && a.mask == b.mask);
        assert_ne!(spec.generate(6).unwrap().mask, a.mask);
        for s in spec.generate_range(0, 20).unwrap() {
            s.mask.validate(spec.num_classes).unwrap();
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
