//! Tensor type, primitive operators and the autodiff tape.

pub mod conv;
pub mod elementwise;
pub mod gradcheck;
pub mod norm;
pub mod ntensor;
pub mod pool;
pub mod resize;
pub mod tape;
pub mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvSpec};
pub use elementwise::{add, concat_channels, relu_backward, relu_forward, split_channels};
pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};
pub use norm::{batchnorm_backward, batchnorm_forward, BatchNormState, Mode};
pub use ntensor::{load_nt, read_nt, save_nt, write_nt};
pub use pool::{maxpool_backward, maxpool_forward, PoolSpec};
pub use resize::{upsample_bilinear, upsample_bilinear_backward};
pub use tape::{BnRunning, BnUpdate, GradStore, Gradients, Graph, Var};
pub use tensor::Tensor;
