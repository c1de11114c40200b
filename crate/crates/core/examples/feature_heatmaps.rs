//! Dumps the region and semantic feature maps of one block as PGM heatmaps.
//!
//! cargo run --release --example feature_heatmaps -- [out_dir] [block]

use std::path::PathBuf;

use dwrseg::analysis::dump_feature_heatmaps;
use dwrseg::data::ShapesSpec;
use dwrseg::network::{build, NetworkConfig, Variant};

fn main() -> dwrseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "heatmaps".into()));
    let block = args.next().unwrap_or_else(|| "s3.0".into());

    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let store = build(&cfg, 0)?;
    let spec = ShapesSpec { height: 128, width: 128, ..ShapesSpec::default() };
    let image = spec.generate(3)?.image;
    let export = dump_feature_heatmaps(&store, &cfg, &image, &block, &out)?;
    for (key, t) in &export.maps {
        println!("{key}: {:?}", t.shape());
    }
    println!("{} files in {}", export.files.len(), out.display());
    Ok(())
}
