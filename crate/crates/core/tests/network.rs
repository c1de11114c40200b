use std::time::Instant;

use dwrseg::blocks::Planner;
use dwrseg::engine::{ConvSpec, Graph, Mode, Tensor};
use dwrseg::network::{
    benchmark_forward, build, count_macs, count_params, count_report, forward, infer, load_checkpoint,
    read_checkpoint, save_checkpoint, write_checkpoint, NetworkConfig, StageBlock, StageConfig, Variant,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_config() -> NetworkConfig {
    let mut cfg = NetworkConfig::preset(Variant::Tiny, 3);
    cfg.stem_channels = 8;
    cfg.stages = [
        StageConfig {
            block: StageBlock::Sir { expansion: 2 },
            channels: 8,
            repeats: 1,
        },
        StageConfig {
            block: StageBlock::Dwr { branches: 2 },
            channels: 8,
            repeats: 1,
        },
        StageConfig {
            block: StageBlock::Dwr { branches: 3 },
            channels: 8,
            repeats: 1,
        },
    ];
    cfg.head_channels = 8;
    cfg
}

#[test]
fn closed_form_counts() {
    let mut p = Planner::default();
    p.conv("c", ConvSpec::new(16, 32, 3).bias(true), (8, 8)).unwrap();
    assert_eq!(p.total_params(), 4640);

    let spec = ConvSpec::new(192, 128, 1);
    assert_eq!(spec.macs([1, 128, 8, 8]), 1_572_864);
}

#[test]
fn toy_network_matches_hand_count() {
    // stem (3->4 k3, 4->2 k1, 2->4 k3, 8->8 k3, four BNs)       800
    // s2.0 SIR 8->16 k3 + bn16 + 16->8 k1 with bias            1320
    // s3.0 DWR rr 8->12 k3 + bn12, dw 8+4, bn12, 12->8 +b      1124
    // s4.0 DWR rr 8->12 k3 + bn12, dw 6+3+3, bn12, 12->8 +b    1124
    // decoder bn24                                               48
    // head 24->8 k3 + bn8 + 8->3 with bias                     1771
    assert_eq!(count_params(&toy_config()).unwrap(), 6187);
    assert_eq!(build(&toy_config(), 0).unwrap().learnable_count(), 6187);
}

#[test]
fn published_variants_within_tolerance() {
    let t0 = Instant::now();
    let b = count_report(&NetworkConfig::preset(Variant::B, 19), 512, 1024).unwrap();
    let l = count_report(&NetworkConfig::preset(Variant::L, 19), 512, 1024).unwrap();
    assert!(t0.elapsed().as_secs_f64() < 1.0);
    let within = |v: f64, target: f64, tol: f64| (v - target).abs() <= tol * target;
    assert!(within(b.params as f64, 2.54e6, 0.15), "B params {}", b.params);
    assert!(within(l.params as f64, 3.53e6, 0.15), "L params {}", l.params);
    assert!(within(b.macs as f64, 13.62e9, 0.10), "B macs {}", b.macs);
    assert!(within(l.macs as f64, 16.42e9, 0.10), "L macs {}", l.macs);
    assert!(l.params > b.params && l.macs > b.macs);
    let ratio = l.params as f64 / b.params as f64;
    assert!(within(ratio, 3.53 / 2.54, 0.15), "L/B ratio {ratio}");

    assert_eq!(b.layers.iter().map(|r| r.params).sum::<usize>(), b.params);
    assert_eq!(b.groups.iter().map(|g| g.macs).sum::<u64>(), b.macs);
    let dev = b.deviation.as_ref().unwrap();
    assert!(dev.params_pct.abs() < 15.0);
    let text = b.to_text(true);
    assert!(text.contains("s3.0.rr.conv") && text.contains("total"));
    let json: serde_json::Value = serde_json::from_str(&b.to_json()).unwrap();
    assert_eq!(json["params"].as_u64().unwrap() as usize, b.params);
}

#[test]
fn analytic_macs_match_executed_macs() {
    for variant in [Variant::Tiny, Variant::B] {
        let cfg = NetworkConfig::preset(variant, 5);
        let store = build(&cfg, 1).unwrap();
        let mut g = Graph::inference();
        let x = g.input(Tensor::zeros([1, 3, 64, 96]));
        forward(&mut g, &store, &cfg, x, Mode::Eval).unwrap();
        assert_eq!(g.conv_macs(), count_macs(&cfg, 64, 96).unwrap());
    }
}

#[test]
fn forward_shapes_for_published_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::uniform([1, 3, 64, 64], 0.0, 1.0, &mut rng);
    for variant in [Variant::B, Variant::L] {
        let cfg = NetworkConfig::preset(variant, 19);
        assert_eq!(cfg.decoder_width(), 320);
        let store = build(&cfg, 0).unwrap();
        let (logits, taps) = infer(&store, &cfg, &x).unwrap();
        assert_eq!(logits.shape(), [1, 19, 64, 64]);
        assert_eq!(taps[0].shape(), [1, 64, 8, 8]);
        assert_eq!(taps[1].shape(), [1, 128, 4, 4]);
        assert_eq!(taps[2].shape(), [1, 128, 2, 2]);
        assert!(logits.is_finite());
    }
}

#[test]
fn rejects_bad_input_sizes() {
    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let store = build(&cfg, 0).unwrap();
    assert!(infer(&store, &cfg, &Tensor::zeros([1, 3, 48, 64])).is_err());
    assert!(infer(&store, &cfg, &Tensor::zeros([1, 1, 64, 64])).is_err());
}

#[test]
fn eval_forward_is_pure() {
    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let store = build(&cfg, 2).unwrap();
    let snapshot = store.clone();
    let x = Tensor::full([2, 3, 64, 64], 0.3);
    let (a, _) = infer(&store, &cfg, &x).unwrap();
    let (b, _) = infer(&store, &cfg, &x).unwrap();
    assert!(a.bitwise_eq(&b));
    assert!(store.iter().zip(snapshot.iter()).all(|((_, p), (_, q))| p == q));
}

#[test]
fn build_is_seed_deterministic() {
    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let a = build(&cfg, 9).unwrap();
    let b = build(&cfg, 9).unwrap();
    let c = build(&cfg, 10).unwrap();
    assert!(a.iter().zip(b.iter()).all(|((n, p), (m, q))| n == m && p.tensor.bitwise_eq(&q.tensor)));
    let w = "s3.0.rr.conv.weight";
    assert!(!a.get(w).unwrap().bitwise_eq(c.get(w).unwrap()));
    // Kaiming std for a 3x3 conv from 16 channels
    let t = a.get(w).unwrap();
    let std = (t.data().iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / t.len() as f64).sqrt();
    let want = (2.0f64 / (16.0 * 9.0)).sqrt();
    assert!((std - want).abs() < 0.15 * want, "std {std} vs {want}");
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let mut store = build(&cfg, 7).unwrap();
    store.get_mut("decoder.bn.running_var").unwrap().data_mut()[0] = 0.123_456_79;

    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    save_checkpoint(&a, &cfg, &store).unwrap();
    let (cfg2, store2) = load_checkpoint(&a).unwrap();
    assert_eq!(cfg2, cfg);
    save_checkpoint(&b, &cfg2, &store2).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let x = Tensor::uniform([1, 3, 64, 64], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let (la, _) = infer(&store, &cfg, &x).unwrap();
    let (lb, _) = infer(&store2, &cfg2, &x).unwrap();
    assert!(la.bitwise_eq(&lb));
}

#[test]
fn checkpoint_rejects_corruption() {
    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let store = build(&cfg, 7).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &cfg, &store).unwrap();

    assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    assert!(read_checkpoint(&bytes[..20]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(read_checkpoint(extra.as_slice()).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(read_checkpoint(magic.as_slice()).is_err());
    let mut version = bytes.clone();
    version[8] = 2;
    assert!(read_checkpoint(version.as_slice()).is_err());

    // a store for another config does not match the manifest
    let other = NetworkConfig::preset(Variant::Tiny, 5);
    assert!(write_checkpoint(Vec::new(), &other, &store).is_err());
}

#[test]
fn benchmark_reports_requested_samples_without_tape() {
    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let store = build(&cfg, 0).unwrap();
    let r = benchmark_forward(&store, &cfg, [1, 3, 64, 64], 2, 10).unwrap();
    assert_eq!(r.samples_ms.len(), 10);
    assert_eq!((r.tape_records, r.grad_buffers), (0, 0));
    assert!(r.median_ms > 0.0 && r.p95_ms >= r.median_ms && r.fps > 0.0);

    // the counters do move for a recording graph
    let before = dwrseg::engine::tape::autodiff_counters();
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros([1, 3, 64, 64]));
    forward(&mut g, &store, &cfg, x, Mode::Eval).unwrap();
    assert!(dwrseg::engine::tape::autodiff_counters().0 > before.0);
}
