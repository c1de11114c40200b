//! Wall-clock latency of eval-mode inference on the CPU engine.

use std::time::Instant;

use rand::SeedableRng;
use serde::Serialize;

use super::config::NetworkConfig;
use super::model::infer;
use crate::engine::tape::autodiff_counters;
use crate::engine::Tensor;
use crate::error::Result;
use crate::params::ParamStore;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub input: [usize; 4],
    pub warmup: usize,
    pub iters: usize,
    pub threads: usize,
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub fps: f64,
    /// Tape records and gradient buffers created during the timed runs.
    pub tape_records: u64,
    pub grad_buffers: u64,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Times `iters` eval forwards on a fixed random input after `warmup`
/// untimed ones. FPS is `batch * 1000 / mean_ms`.
pub fn benchmark_forward(
    store: &ParamStore,
    cfg: &NetworkConfig,
    input: [usize; 4],
    warmup: usize,
    iters: usize,
) -> Result<BenchReport> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::uniform(input, 0.0, 1.0, &mut rng);
    for _ in 0..warmup {
        infer(store, cfg, &x)?;
    }
    let before = autodiff_counters();
    let mut samples_ms = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t0 = Instant::now();
        infer(store, cfg, &x)?;
        samples_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let after = autodiff_counters();
    let mut sorted = samples_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let mean_ms = if iters == 0 {
        f64::NAN
    } else {
        samples_ms.iter().sum::<f64>() / iters as f64
    };
    Ok(BenchReport {
        input,
        warmup,
        iters,
        threads: rayon::current_num_threads(),
        mean_ms,
        median_ms: median(&sorted),
        p95_ms: percentile(&sorted, 0.95),
        fps: input[0] as f64 * 1e3 / mean_ms,
        samples_ms,
        tape_records: after.0 - before.0,
        grad_buffers: after.1 - before.1,
    })
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let [n, c, h, w] = self.input;
        format!(
            "input {n}x{c}x{h}x{w}, {} iters after {} warmup, {} thread(s)\n\
             mean {:.2} ms  median {:.2} ms  p95 {:.2} ms  {:.1} FPS\n\
             (CPU engine latency; not comparable to GPU figures)\n",
            self.iters, self.warmup, self.threads, self.mean_ms, self.median_ms, self.p95_ms, self.fps
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_and_median() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(median(&v), 10.5);
        assert_eq!(median(&[3.0]), 3.0);
    }
}
