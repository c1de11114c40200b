//! Optimization recipe: SGD with momentum and poly decay, OHEM
//! cross-entropy, augmentation, mIoU and the training loop.

pub mod augment;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod train;

pub use augment::{augment, hflip, AugmentConfig, CropSize};
pub use loss::{ohem_ce_loss, OhemConfig, OhemLoss};
pub use metrics::{argmax_labels, miou, ConfusionMatrix, MiouReport};
pub use optim::{poly_lr, sgd_step, OptimizerState, SgdConfig};
pub use train::{evaluate, train_loop, MetricRecord, TrainConfig, TrainOutcome};
