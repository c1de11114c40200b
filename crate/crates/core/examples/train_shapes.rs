//! Trains the tiny network on synthetic shapes and prints the metric log.
//!
//! cargo run --release --example train_shapes -- [iters] [canvas]

use std::time::Instant;

use dwrseg::data::ShapesSpec;
use dwrseg::network::{build, NetworkConfig, Variant};
use dwrseg::training::{train_loop, TrainConfig};

fn main() -> dwrseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let canvas = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);

    let spec = ShapesSpec {
        height: canvas,
        width: canvas,
        ..ShapesSpec::default()
    };
    let train = spec.generate_range(0, 256)?;
    let val = spec.generate_range(1_000_000, 64)?;
    let net = NetworkConfig::preset(Variant::Tiny, spec.num_classes);
    let mut store = build(&net, 0)?;
    let cfg = TrainConfig {
        iters,
        log_every: (iters / 20).max(1),
        eval_every: (iters / 4).max(1),
        ..TrainConfig::default()
    };

    let t0 = Instant::now();
    let out = train_loop(&net, &mut store, &train, &val, &cfg, &mut |r| {
        println!("{}  [{:.1}s]", serde_json::to_string(r).unwrap(), t0.elapsed().as_secs_f64());
        Ok(())
    })?;
    if let Some(report) = out.final_eval {
        println!("val mIoU {:.4}  per class {:?}", report.miou, report.per_class);
    }
    Ok(())
}
