use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};

/// Label value excluded from losses and metrics.
pub const IGNORE_LABEL: u8 = 255;

/// Per-pixel class labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(h: usize, w: usize, fill: u8) -> Self {
        Self {
            h,
            w,
            data: vec![fill; h * w],
        }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != h * w {
            return Err(shape_err("mask", format!("{} labels for {h}x{w}", data.len())));
        }
        Ok(Self { h, w, data })
    }

    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.w + x] = v;
    }

    /// Every label is a class below `num_classes` or the ignore label.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.data.iter().find(|&&v| v != IGNORE_LABEL && v as usize >= num_classes) {
            Some(v) => Err(Error::OutOfRange(format!("label {v} with {num_classes} classes"))),
            None => Ok(()),
        }
    }
}

/// An RGB image in `[0, 1]` with shape `(1, 3, h, w)` and its label mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub mask: Mask,
}

impl Sample {
    pub fn new(image: Tensor, mask: Mask) -> Result<Self> {
        let [n, c, h, w] = image.shape();
        if n != 1 || c != 3 || h != mask.h || w != mask.w {
            return Err(shape_err(
                "sample",
                format!("image {:?} does not pair with a {}x{} mask", image.shape(), mask.h, mask.w),
            ));
        }
        Ok(Self { image, mask })
    }

    pub fn height(&self) -> usize {
        self.mask.h
    }

    pub fn width(&self) -> usize {
        self.mask.w
    }
}

/// Stacks samples of equal size into an image batch and concatenated labels.
pub fn collate(samples: &[Sample]) -> Result<(Tensor, Vec<u8>)> {
    let images: Vec<Tensor> = samples.iter().map(|s| s.image.clone()).collect();
    let batch = Tensor::stack(&images)?;
    let labels = samples.iter().flat_map(|s| s.mask.data.iter().copied()).collect();
    Ok((batch, labels))
}
