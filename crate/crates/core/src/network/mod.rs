//! Full networks: configuration presets, assembly, accounting, checkpoints
//! and latency measurement.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod count;
pub mod model;

pub use bench::{benchmark_forward, BenchReport};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{NetworkConfig, StageBlock, StageConfig, Variant, STAGE_NAMES};
pub use count::{REFERENCE_INPUT, count_macs, count_params, count_report, CountReport};
pub use model::{build, forward, infer, plan, ForwardOutput};
