//! Receptive-field analysis, branch weight statistics and feature export.

pub mod erf;
pub mod heatmap;
pub mod rf;
pub mod weights;

pub use erf::{erf_from, erf_map, support_box, ErfTap};
pub use heatmap::{dump_feature_heatmaps, signed_grey, HeatmapExport};
pub use rf::{network_rf, theoretical_rf, BlockRf, NetworkRf, RfLayer, RfState, RfStep};
pub use weights::{branch_weight_stats, BranchHistogram};
