use super::tensor::Tensor;
use crate::error::{shape_err, Result};

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes the gradient where `x > 0`; the gradient at exactly zero is zero.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.ensure_shape("relu_backward", x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

pub fn add(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.shape() != y.shape() {
        return Err(shape_err("add", format!("{:?} vs {:?}", x.shape(), y.shape())));
    }
    let data = x.data().iter().zip(y.data()).map(|(a, b)| a + b).collect();
    Tensor::from_vec(x.shape(), data)
}

/// Concatenates along the channel axis, preserving input order.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| shape_err("concat_channels", "no inputs"))?;
    let [n, _, h, w] = first.shape();
    let mut channels = 0;
    for x in xs {
        if x.n() != n || x.h() != h || x.w() != w {
            return Err(shape_err(
                "concat_channels",
                format!("{:?} vs {:?}", x.shape(), first.shape()),
            ));
        }
        channels += x.c();
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * channels * plane);
    for b in 0..n {
        for x in xs {
            let per = x.c() * plane;
            data.extend_from_slice(&x.data()[b * per..(b + 1) * per]);
        }
    }
    Tensor::from_vec([n, channels, h, w], data)
}

/// Inverse of [`concat_channels`]: cuts `x` into consecutive channel groups.
pub fn split_channels(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    if widths.iter().sum::<usize>() != x.c() {
        return Err(shape_err(
            "split_channels",
            format!("widths {widths:?} do not sum to {}", x.c()),
        ));
    }
    let mut start = 0;
    widths
        .iter()
        .map(|&width| {
            let part = slice_channels(x, start, width);
            start += width;
            part
        })
        .collect()
}

pub fn slice_channels(x: &Tensor, start: usize, width: usize) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    if start + width > c || width == 0 {
        return Err(shape_err(
            "slice_channels",
            format!("range {start}..{} of {c} channels", start + width),
        ));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * width * plane);
    for b in 0..n {
        let off = (b * c + start) * plane;
        data.extend_from_slice(&x.data()[off..off + width * plane]);
    }
    Tensor::from_vec([n, width, h, w], data)
}

/// Adds `part` into channels `start..start + part.c()` of `dst`.
pub fn accumulate_channels(dst: &mut Tensor, start: usize, part: &Tensor) -> Result<()> {
    let [n, c, h, w] = dst.shape();
    if part.n() != n || part.h() != h || part.w() != w || start + part.c() > c {
        return Err(shape_err("accumulate_channels", "slice out of range"));
    }
    let plane = h * w;
    let width = part.c();
    for b in 0..n {
        let off = (b * c + start) * plane;
        let src = &part.data()[b * width * plane..(b + 1) * width * plane];
        for (d, s) in dst.data_mut()[off..off + width * plane].iter_mut().zip(src) {
            *d += s;
        }
    }
    Ok(())
}
