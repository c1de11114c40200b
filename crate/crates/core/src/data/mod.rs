//! Synthetic shape scenes and the PPM/PGM files used to store datasets.

pub mod manifest;
pub mod pnm;
pub mod sample;
pub mod shapes;

pub use manifest::{dataset_manifest, load_dataset, write_dataset};
pub use pnm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm, read_pgm, read_ppm, write_pgm, write_ppm};
pub use sample::{collate, Mask, Sample, IGNORE_LABEL};
pub use shapes::{render, Geometry, Shape, ShapeKind, ShapesSpec};
