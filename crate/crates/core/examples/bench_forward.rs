//! Eval-mode latency of a randomly initialised model.
//!
//! cargo run --release --example bench_forward -- [tiny|B|L] [height] [width] [threads]

use dwrseg::network::{benchmark_forward, build, NetworkConfig, Variant};

fn main() -> dwrseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().map_or(Ok(Variant::Tiny), |s| s.parse())?;
    let h = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    let w = args.next().and_then(|s| s.parse().ok()).unwrap_or(512);
    let threads = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let cfg = NetworkConfig::preset(variant, 19);
    let store = build(&cfg, 0)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    let report = pool.install(|| benchmark_forward(&store, &cfg, [1, 3, h, w], 2, 10))?;
    print!("{}", report.to_text());
    Ok(())
}
