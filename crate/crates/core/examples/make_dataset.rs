//! Writes a synthetic shapes dataset as PPM/PGM pairs and loads it back.
//!
//! cargo run --release --example make_dataset -- [dir] [count]

use std::path::PathBuf;

use dwrseg::data::{load_dataset, write_dataset, ShapesSpec};

fn main() -> dwrseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "shapes_data".into()));
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);

    let spec = ShapesSpec::default();
    let samples = spec.generate_range(0, count)?;
    let pairs = write_dataset(&dir, "shape", &samples)?;
    let reloaded = load_dataset(&dir)?;
    assert_eq!(reloaded.len(), samples.len());

    let mut hist = vec![0usize; spec.num_classes];
    for s in &reloaded {
        for &v in &s.mask.data {
            hist[v as usize] += 1;
        }
    }
    println!("{} pairs in {}, first {:?}", pairs.len(), dir.display(), pairs[0]);
    println!("class pixel counts {hist:?}");
    Ok(())
}
