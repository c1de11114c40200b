//! Deterministic CPU implementation of the DWRSeg family of real-time
//! semantic-segmentation networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`engine`]: NCHW tensors, convolution/normalization/pooling/resampling
//!   kernels and a recorded tape for reverse-mode gradients.
//! - [`blocks`]: DWR, SIR, stem, segmentation head and the receptive-field
//!   probe block.
//! - [`network`]: full network assembly, parameter/MAC accounting,
//!   checkpoints and latency measurement.
//! - [`training`]: SGD with momentum, poly schedule, OHEM cross-entropy,
//!   augmentation, mIoU and the training loop.
//! - [`data`]: synthetic shape scenes and PPM/PGM file IO.
//! - [`analysis`]: theoretical and effective receptive fields, pointwise
//!   branch-weight statistics and feature heatmap export.
//! - [`cli`]: the command-line front end used by the `dwrseg` binary.

// `!(x > 0.0)` style checks reject NaN on purpose; kernels index several
// buffers with one loop counter.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod blocks;
pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod network;
pub mod params;
pub mod training;

pub use error::{Error, Result};
