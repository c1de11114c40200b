//! Empirical receptive fields: the input gradient of one output unit.

use serde::{Deserialize, Serialize};

use crate::engine::{Graph, Mode, Tensor, Var};
use crate::error::{Error, Result};
use crate::network::{forward, NetworkConfig};
use crate::params::ParamStore;

/// Which network output the unit is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErfTap {
    S2,
    S3,
    S4,
    Logits,
}

impl std::str::FromStr for ErfTap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s2" => Ok(Self::S2),
            "s3" => Ok(Self::S3),
            "s4" => Ok(Self::S4),
            "logits" => Ok(Self::Logits),
            _ => Err(Error::InvalidConfig(format!("unknown tap {s:?}"))),
        }
    }
}

/// Backpropagates a unit gradient from position `(y, x)` of the output built by
/// `build`, summed over output channels, to `input`. Returns `|d out / d input|`
/// summed over input channels as a `(1, 1, h, w)` map.
pub fn erf_from<F>(input: &Tensor, unit: (usize, usize), build: F) -> Result<Tensor>
where
    F: FnOnce(&mut Graph, Var) -> Result<Var>,
{
    if input.n() != 1 {
        return Err(Error::InvalidConfig("receptive field maps take a single image".into()));
    }
    let mut g = Graph::new();
    let x = g.input(input.clone());
    let out = build(&mut g, x)?;
    let [_, c, h, w] = g.value(out).shape();
    let (uy, ux) = unit;
    if uy >= h || ux >= w {
        return Err(Error::OutOfRange(format!("unit {unit:?} outside {h}x{w} output")));
    }
    let mut seed = Tensor::zeros([1, c, h, w]);
    for ch in 0..c {
        seed.set(0, ch, uy, ux, 1.0);
    }
    let grads = g.backward(out, seed)?;
    let [_, ic, ih, iw] = input.shape();
    let mut map = Tensor::zeros([1, 1, ih, iw]);
    if let Some(gx) = grads.wrt(x) {
        for ch in 0..ic {
            for yy in 0..ih {
                for xx in 0..iw {
                    let v = map.at(0, 0, yy, xx) + gx.at(0, ch, yy, xx).abs();
                    map.set(0, 0, yy, xx, v);
                }
            }
        }
    }
    Ok(map)
}

/// Eval-mode input-gradient map of one unit of a network output. Batch
/// statistics would couple every pixel, so running statistics are used.
pub fn erf_map(
    store: &ParamStore,
    cfg: &NetworkConfig,
    input: &Tensor,
    tap: ErfTap,
    unit: (usize, usize),
) -> Result<Tensor> {
    erf_from(input, unit, |g, x| {
        let out = forward(g, store, cfg, x, Mode::Eval)?;
        Ok(match tap {
            ErfTap::S2 => out.taps[0],
            ErfTap::S3 => out.taps[1],
            ErfTap::S4 => out.taps[2],
            ErfTap::Logits => out.logits,
        })
    })
}

/// Smallest box `(y0, y1, x0, x1)`, inclusive, holding every non-zero entry.
pub fn support_box(map: &Tensor) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for y in 0..map.h() {
        for x in 0..map.w() {
            if map.at(0, 0, y, x) != 0.0 {
                bbox = Some(match bbox {
                    None => (y, y, x, x),
                    Some((y0, y1, x0, x1)) => (y0.min(y), y1.max(y), x0.min(x), x1.max(x)),
                });
            }
        }
    }
    bbox
}
