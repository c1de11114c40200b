//! Direct 2D convolution on NCHW tensors with zero padding, dilation and groups.
//!
//! Every output element is accumulated in a fixed order (input channel, then
//! kernel row, then kernel column, bias last). Work is split across threads by
//! output plane only, so results are bitwise identical at any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Dense `k x k` convolution with "same" padding for stride 1.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            dilation: 1,
            groups: 1,
            has_bias: false,
        }
    }

    /// Depthwise `k x k` convolution whose padding keeps the spatial size.
    pub fn depthwise(channels: usize, kernel: usize, dilation: usize) -> Self {
        Self {
            in_channels: channels,
            out_channels: channels,
            kernel,
            stride: 1,
            padding: dilation * (kernel / 2),
            dilation,
            groups: channels,
            has_bias: false,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel,
            self.kernel,
        ]
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("conv: {m}")));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.kernel == 0 || self.stride == 0 || self.dilation == 0 || self.groups == 0 {
            return bad("kernel, stride, dilation and groups must be positive");
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return bad("channel counts must be divisible by groups");
        }
        Ok(())
    }

    /// Output extent along one spatial axis, `None` if it would be non-positive.
    pub fn output_extent(&self, input: usize) -> Option<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        if padded < span {
            None
        } else {
            Some((padded - span) / self.stride + 1)
        }
    }

    pub fn output_shape(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        let [n, c, h, w] = input;
        if c != self.in_channels {
            return Err(shape_err(
                "conv2d",
                format!("input has {c} channels, spec expects {}", self.in_channels),
            ));
        }
        match (self.output_extent(h), self.output_extent(w)) {
            (Some(oh), Some(ow)) => Ok([n, self.out_channels, oh, ow]),
            _ => Err(shape_err(
                "conv2d",
                format!("non-positive output size for {h}x{w} input"),
            )),
        }
    }

    /// Multiply-accumulates for one forward pass over `out_shape`.
    pub fn macs(&self, out_shape: [usize; 4]) -> u64 {
        let per = (self.kernel * self.kernel * self.in_channels / self.groups) as u64;
        out_shape.iter().map(|&d| d as u64).product::<u64>() * per
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>()
            + if self.has_bias { self.out_channels } else { 0 }
    }
}

/// Range of output positions `o` for which `o * stride + offset` lands in `[0, len)`.
#[inline]
fn valid_range(out_len: usize, stride: usize, offset: isize, len: usize) -> (usize, usize) {
    let stride = stride as isize;
    let lo = if offset >= 0 {
        0
    } else {
        (((-offset) + stride - 1) / stride).min(out_len as isize)
    };
    let hi = if (len as isize) <= offset {
        0
    } else {
        ((len as isize - offset + stride - 1) / stride).min(out_len as isize)
    };
    (lo as usize, (hi.max(lo)) as usize)
}

fn check_inputs(x: &Tensor, weight: &Tensor, bias: Option<&[f32]>, spec: &ConvSpec) -> Result<[usize; 4]> {
    spec.validate()?;
    let out = spec.output_shape(x.shape())?;
    weight.ensure_shape("conv2d weight", spec.weight_shape())?;
    match (bias, spec.has_bias) {
        (Some(b), true) if b.len() == spec.out_channels => {}
        (None, false) => {}
        (Some(b), _) => {
            return Err(shape_err(
                "conv2d bias",
                format!("{} values for {} channels (has_bias={})", b.len(), spec.out_channels, spec.has_bias),
            ))
        }
        (None, true) => return Err(shape_err("conv2d bias", "spec requires a bias")),
    }
    Ok(out)
}

pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&[f32]>,
    spec: &ConvSpec,
) -> Result<Tensor> {
    let out_shape = check_inputs(x, weight, bias, spec)?;
    x.ensure_finite("conv2d")?;
    weight.ensure_finite("conv2d")?;

    let [_, cin, h, w] = x.shape();
    let [_, cout, oh, ow] = out_shape;
    let cin_g = cin / spec.groups;
    let cout_g = cout / spec.groups;
    let k = spec.kernel;
    let (s, p, d) = (spec.stride, spec.padding as isize, spec.dilation);
    let xd = x.data();
    let wd = weight.data();

    let mut out = Tensor::zeros(out_shape);
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, acc)| {
            let n = plane / cout;
            let oc = plane % cout;
            let g = oc / cout_g;
            for icg in 0..cin_g {
                let ic = g * cin_g + icg;
                let xin = &xd[(n * cin + ic) * h * w..(n * cin + ic + 1) * h * w];
                for ky in 0..k {
                    let yoff = (ky * d) as isize - p;
                    let (oy0, oy1) = valid_range(oh, s, yoff, h);
                    for kx in 0..k {
                        let wv = wd[((oc * cin_g + icg) * k + ky) * k + kx];
                        let xoff = (kx * d) as isize - p;
                        let (ox0, ox1) = valid_range(ow, s, xoff, w);
                        if ox0 == ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = (oy * s) as isize + yoff;
                            let row = &xin[iy as usize * w..(iy as usize + 1) * w];
                            let arow = &mut acc[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let ix0 = (ox0 as isize + xoff) as usize;
                                for (a, &xv) in arow[ox0..ox1].iter_mut().zip(&row[ix0..]) {
                                    *a += wv * xv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    let ix = ((ox * s) as isize + xoff) as usize;
                                    arow[ox] += wv * row[ix];
                                }
                            }
                        }
                    }
                }
            }
            if let Some(b) = bias {
                for a in acc.iter_mut() {
                    *a += b[oc];
                }
            }
        });
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
pub struct ConvGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Option<Vec<f32>>,
}

pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    spec: &ConvSpec,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    spec.validate()?;
    let out_shape = spec.output_shape(x.shape())?;
    weight.ensure_shape("conv2d_backward weight", spec.weight_shape())?;
    grad_out.ensure_shape("conv2d_backward grad_out", out_shape)?;

    let [batch, cin, h, w] = x.shape();
    let [_, cout, oh, ow] = out_shape;
    let cin_g = cin / spec.groups;
    let cout_g = cout / spec.groups;
    let k = spec.kernel;
    let (s, p, d) = (spec.stride, spec.padding as isize, spec.dilation);
    let xd = x.data();
    let wd = weight.data();
    let gd = grad_out.data();

    // grad_x: one worker per (n, ic) plane, contributions ordered by (oc, ky, kx).
    let mut grad_x = Tensor::zeros(x.shape());
    grad_x
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane, gx)| {
            let n = plane / cin;
            let ic = plane % cin;
            let g = ic / cin_g;
            let icg = ic % cin_g;
            for oc in g * cout_g..(g + 1) * cout_g {
                let gout = &gd[(n * cout + oc) * oh * ow..(n * cout + oc + 1) * oh * ow];
                for ky in 0..k {
                    let yoff = (ky * d) as isize - p;
                    let (oy0, oy1) = valid_range(oh, s, yoff, h);
                    for kx in 0..k {
                        let wv = wd[((oc * cin_g + icg) * k + ky) * k + kx];
                        let xoff = (kx * d) as isize - p;
                        let (ox0, ox1) = valid_range(ow, s, xoff, w);
                        for oy in oy0..oy1 {
                            let iy = ((oy * s) as isize + yoff) as usize;
                            let grow = &gout[oy * ow..(oy + 1) * ow];
                            let xrow = &mut gx[iy * w..(iy + 1) * w];
                            for ox in ox0..ox1 {
                                let ix = ((ox * s) as isize + xoff) as usize;
                                xrow[ix] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        });

    // grad_w: one worker per output channel, reduction ordered by (n, oy, ox).
    let kk = cin_g * k * k;
    let mut grad_w = Tensor::zeros(spec.weight_shape());
    grad_w
        .data_mut()
        .par_chunks_mut(kk)
        .enumerate()
        .for_each(|(oc, gw)| {
            let g = oc / cout_g;
            for (idx, slot) in gw.iter_mut().enumerate() {
                let icg = idx / (k * k);
                let ky = (idx / k) % k;
                let kx = idx % k;
                let ic = g * cin_g + icg;
                let yoff = (ky * d) as isize - p;
                let xoff = (kx * d) as isize - p;
                let (oy0, oy1) = valid_range(oh, s, yoff, h);
                let (ox0, ox1) = valid_range(ow, s, xoff, w);
                let mut acc = 0.0f32;
                for n in 0..batch {
                    let gout = &gd[(n * cout + oc) * oh * ow..(n * cout + oc + 1) * oh * ow];
                    let xin = &xd[(n * cin + ic) * h * w..(n * cin + ic + 1) * h * w];
                    for oy in oy0..oy1 {
                        let iy = ((oy * s) as isize + yoff) as usize;
                        for ox in ox0..ox1 {
                            let ix = ((ox * s) as isize + xoff) as usize;
                            acc += gout[oy * ow + ox] * xin[iy * w + ix];
                        }
                    }
                }
                *slot = acc;
            }
        });

    let grad_b = spec.has_bias.then(|| {
        (0..cout)
            .map(|oc| {
                let mut acc = 0.0f32;
                for n in 0..batch {
                    for v in &gd[(n * cout + oc) * oh * ow..(n * cout + oc + 1) * oh * ow] {
                        acc += v;
                    }
                }
                acc
            })
            .collect()
    });

    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}
