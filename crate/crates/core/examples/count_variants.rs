//! Analytic parameter and MAC counts for the published variants.
//!
//! cargo run --release --example count_variants -- [height] [width]

use dwrseg::network::{count_report, NetworkConfig, Variant};

fn main() -> dwrseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let h = args.next().and_then(|s| s.parse().ok()).unwrap_or(512);
    let w = args.next().and_then(|s| s.parse().ok()).unwrap_or(1024);
    for variant in [Variant::Tiny, Variant::B, Variant::L] {
        let report = count_report(&NetworkConfig::preset(variant, 19), h, w)?;
        println!("== {variant:?} ==");
        print!("{}", report.to_text(false));
    }
    // one row per conv / bn for the smallest model
    print!("{}", count_report(&NetworkConfig::preset(Variant::Tiny, 19), h, w)?.to_text(true));
    Ok(())
}
