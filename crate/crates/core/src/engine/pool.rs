use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    fn extent(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        if self.kernel == 0 || self.stride == 0 || padded < self.kernel {
            None
        } else {
            Some((padded - self.kernel) / self.stride + 1)
        }
    }

    pub fn output_shape(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        let [n, c, h, w] = input;
        // a window made only of padding would have no maximum
        if self.padding >= self.kernel {
            return Err(shape_err("maxpool", "padding must be smaller than kernel"));
        }
        match (self.extent(h), self.extent(w)) {
            (Some(oh), Some(ow)) => Ok([n, c, oh, ow]),
            _ => Err(shape_err("maxpool", format!("non-positive output for {h}x{w}"))),
        }
    }
}

/// Windowed maximum with `-inf` padding. Also returns, per output element, the
/// flat in-plane index of the first (row-major) maximal input.
pub fn maxpool_forward(x: &Tensor, spec: PoolSpec) -> Result<(Tensor, Vec<u32>)> {
    let out_shape = spec.output_shape(x.shape())?;
    x.ensure_finite("maxpool")?;
    let [_, _, h, w] = x.shape();
    let [_, _, oh, ow] = out_shape;
    let xd = x.data();
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0u32; out.len()];
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .zip(argmax.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(plane, (o, a))| {
            let xin = &xd[plane * h * w..(plane + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = u32::MAX;
                    for ky in 0..spec.kernel {
                        let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..spec.kernel {
                            let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = iy as usize * w + ix as usize;
                            if best_idx == u32::MAX || xin[idx] > best {
                                best = xin[idx];
                                best_idx = idx as u32;
                            }
                        }
                    }
                    o[oy * ow + ox] = best;
                    a[oy * ow + ox] = best_idx;
                }
            }
        });
    Ok((out, argmax))
}

/// Routes each output gradient to its recorded argmax.
pub fn maxpool_backward(input_shape: [usize; 4], argmax: &[u32], grad_out: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(shape_err("maxpool_backward", "argmax and grad_out lengths differ"));
    }
    let [n, c, h, w] = input_shape;
    if grad_out.n() != n || grad_out.c() != c {
        return Err(shape_err("maxpool_backward", "batch/channel mismatch"));
    }
    let oplane = grad_out.plane();
    let gd = grad_out.data();
    let mut grad_x = Tensor::zeros(input_shape);
    grad_x
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane, gx)| {
            let base = plane * oplane;
            for i in 0..oplane {
                gx[argmax[base + i] as usize] += gd[base + i];
            }
        });
    Ok(grad_x)
}
