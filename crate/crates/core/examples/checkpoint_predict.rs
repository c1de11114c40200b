//! Saves a model, reloads it and writes a predicted mask for one image.
//!
//! cargo run --release --example checkpoint_predict -- [out_dir]

use std::path::PathBuf;

use dwrseg::cli::predict_mask;
use dwrseg::data::{write_pgm, write_ppm, ShapesSpec};
use dwrseg::network::{build, load_checkpoint, save_checkpoint, NetworkConfig, Variant};

fn main() -> dwrseg::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "predict_demo".into()));
    std::fs::create_dir_all(&out)?;

    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let ckpt = out.join("model.ckpt");
    save_checkpoint(&ckpt, &cfg, &build(&cfg, 5)?)?;
    let (cfg, store) = load_checkpoint(&ckpt)?;

    // 100x70 is not a multiple of 32; prediction pads and crops back
    let sample = ShapesSpec { height: 100, width: 70, ..ShapesSpec::default() }.generate(1)?;
    write_ppm(out.join("image.ppm"), &sample.image)?;
    let mask = predict_mask(&store, &cfg, &sample.image)?;
    write_pgm(out.join("pred.pgm"), &mask)?;

    let agree = mask.data.iter().zip(&sample.mask.data).filter(|(a, b)| a == b).count();
    println!("mask {}x{}, {agree} of {} pixels match the (untrained) ground truth", mask.h, mask.w, mask.data.len());
    Ok(())
}
