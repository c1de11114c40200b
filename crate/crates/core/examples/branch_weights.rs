//! Trains a probe model briefly and prints the per-branch distribution of
//! pointwise weight magnitudes.
//!
//! cargo run --release --example branch_weights -- [iters]

use dwrseg::analysis::branch_weight_stats;
use dwrseg::data::ShapesSpec;
use dwrseg::network::{build, NetworkConfig, Variant};
use dwrseg::training::{train_loop, TrainConfig};

fn main() -> dwrseg::Result<()> {
    let iters = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let spec = ShapesSpec::default();
    let train = spec.generate_range(0, 64)?;
    let mut net = NetworkConfig::preset(Variant::Tiny, spec.num_classes);
    net.probe = true;
    let mut store = build(&net, 0)?;
    let cfg = TrainConfig { iters, log_every: iters.max(1), eval_every: 0, ..TrainConfig::default() };
    train_loop(&net, &mut store, &train, &[], &cfg, &mut |r| {
        println!("iter {} loss {:.4}", r.iter, r.loss);
        Ok(())
    })?;

    for h in branch_weight_stats(&store, &net, 10)? {
        let mean: f64 = h
            .pmf
            .iter()
            .enumerate()
            .map(|(i, p)| p * 0.5 * (h.bin_edges[i] + h.bin_edges[i + 1]))
            .sum();
        let cdf: Vec<String> = h.cdf.iter().map(|c| format!("{c:.2}")).collect();
        println!("{} branch {} (d={}): n {} mean |w| {mean:.4} cdf [{}]", h.stage, h.branch, h.dilation, h.count, cdf.join(" "));
    }
    Ok(())
}
