//! Bilinear resampling with half-pixel source coordinates.
//!
//! The source coordinate of destination index `i` is
//! `(i + 0.5) * in / out - 0.5`, clamped below at zero; the upper neighbour is
//! clamped to the last index. This is the `align_corners = false` convention.
//! Values are blended as `a + f * (b - a)` so constant regions stay exact.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{shape_err, Result};

/// Interpolation taps for one destination index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub w_lo: f32,
    pub w_hi: f32,
}

pub fn axis_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            let frac = (src - lo as f64) as f32;
            let frac = if lo == hi { 0.0 } else { frac };
            Tap {
                lo,
                hi,
                w_lo: 1.0 - frac,
                w_hi: frac,
            }
        })
        .collect()
}

/// Resizes every plane to `(out_h, out_w)`; any ratio, no anti-aliasing.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(shape_err("upsample_bilinear", "zero-size target"));
    }
    let [n, c, h, w] = x.shape();
    if h == 0 || w == 0 {
        return Err(shape_err("upsample_bilinear", "zero-size input"));
    }
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let xd = x.data();
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    out.data_mut()
        .par_chunks_mut(out_h * out_w)
        .enumerate()
        .for_each(|(plane, o)| {
            let src = &xd[plane * h * w..(plane + 1) * h * w];
            for (oy, t) in ty.iter().enumerate() {
                let r0 = &src[t.lo * w..(t.lo + 1) * w];
                let r1 = &src[t.hi * w..(t.hi + 1) * w];
                for (ox, s) in tx.iter().enumerate() {
                    let top = r0[s.lo] + s.w_hi * (r0[s.hi] - r0[s.lo]);
                    let bottom = r1[s.lo] + s.w_hi * (r1[s.hi] - r1[s.lo]);
                    o[oy * out_w + ox] = top + t.w_hi * (bottom - top);
                }
            }
        });
    Ok(out)
}

pub fn upsample_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h < x.h() || out_w < x.w() {
        return Err(shape_err(
            "upsample_bilinear",
            format!("target {out_h}x{out_w} smaller than input {}x{}", x.h(), x.w()),
        ));
    }
    x.ensure_finite("upsample_bilinear")?;
    resize_bilinear(x, out_h, out_w)
}

/// Transpose of [`resize_bilinear`]: scatters each output gradient back to its
/// four source taps.
pub fn upsample_bilinear_backward(input_shape: [usize; 4], grad_out: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input_shape;
    let [gn, gc, out_h, out_w] = grad_out.shape();
    if gn != n || gc != c {
        return Err(shape_err("upsample_bilinear_backward", "batch/channel mismatch"));
    }
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let gd = grad_out.data();
    let mut grad_x = Tensor::zeros(input_shape);
    grad_x
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane, gx)| {
            let g = &gd[plane * out_h * out_w..(plane + 1) * out_h * out_w];
            for (oy, t) in ty.iter().enumerate() {
                for (ox, s) in tx.iter().enumerate() {
                    let v = g[oy * out_w + ox];
                    let top = t.w_lo * v;
                    let bottom = t.w_hi * v;
                    gx[t.lo * w + s.lo] += s.w_lo * top;
                    gx[t.lo * w + s.hi] += s.w_hi * top;
                    gx[t.hi * w + s.lo] += s.w_lo * bottom;
                    gx[t.hi * w + s.hi] += s.w_hi * bottom;
                }
            }
        });
    Ok(grad_x)
}
