//! Theoretical receptive fields of DWRSeg-B, and the effective receptive
//! field of one stage-2 unit of an untrained tiny model.

use dwrseg::analysis::{erf_map, network_rf, support_box, ErfTap};
use dwrseg::data::ShapesSpec;
use dwrseg::network::{build, NetworkConfig, Variant};

fn main() -> dwrseg::Result<()> {
    print!("{}", network_rf(&NetworkConfig::preset(Variant::B, 19))?.to_text());

    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let store = build(&cfg, 0)?;
    let spec = ShapesSpec { height: 128, width: 128, ..ShapesSpec::default() };
    let image = spec.generate(0)?.image;
    let unit = (8, 8);
    let map = erf_map(&store, &cfg, &image, ErfTap::S2, unit)?;
    let tap = &network_rf(&cfg)?.taps[0];
    let (lo, hi) = tap.window(unit.0);
    println!("\ntiny s2 unit {unit:?}: theoretical rf {} covers input rows/cols [{lo}, {hi}]", tap.rf);
    match support_box(&map) {
        Some((y0, y1, x0, x1)) => println!("gradient support rows {y0}..={y1}, cols {x0}..={x1}"),
        None => println!("gradient support is empty"),
    }
    let total: f64 = map.data().iter().map(|v| *v as f64).sum();
    let peak = map.data().iter().cloned().fold(0.0f32, f32::max);
    println!("total |grad| {total:.4}, peak {peak:.4}");
    Ok(())
}
