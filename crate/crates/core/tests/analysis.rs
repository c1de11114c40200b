use dwrseg::analysis::{
    branch_weight_stats, dump_feature_heatmaps, erf_from, erf_map, network_rf, signed_grey, support_box,
    theoretical_rf, ErfTap, RfLayer,
};
use dwrseg::data::read_pgm;
use dwrseg::engine::{load_nt, ConvSpec, Graph, Tensor};
use dwrseg::network::{build, NetworkConfig, Variant};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn same(cin: usize, cout: usize, k: usize, stride: usize, d: usize) -> ConvSpec {
    ConvSpec::new(cin, cout, k).stride(stride).dilation(d).padding(d * (k / 2))
}

#[test]
fn dilated_kernel_windows() {
    assert_eq!(theoretical_rf(&[RfLayer::new("a", 3, 1, 1)]).rf, 3);
    assert_eq!(theoretical_rf(&[RfLayer::new("a", 3, 1, 3)]).rf, 7);
    assert_eq!(theoretical_rf(&[RfLayer::new("a", 3, 1, 5)]).rf, 11);
    let stacked = theoretical_rf(&[RfLayer::new("a", 3, 1, 1), RfLayer::new("b", 3, 1, 1)]);
    assert_eq!(stacked.rf, 5);
    assert_eq!(stacked.trace.iter().map(|s| s.rf).collect::<Vec<_>>(), vec![3, 5]);
}

#[test]
fn published_b_deepest_path_is_pinned() {
    // stem: 3 (s2), 3, 7 (s2), 15; jump 4
    // s2: first SIR 3x3/2 -> 23 (jump 8), six more 3x3 -> 119
    // s3: each block rr +2*jump, d3 branch +6*jump; 135, 231, 263, 359, 391, 487 (jump 16)
    // s4: 519, 839, 903, 1223, 1287, 1607 (jump 32)
    let rf = network_rf(&NetworkConfig::preset(Variant::B, 19)).unwrap();
    assert_eq!(rf.taps[0].rf, 119);
    assert_eq!(rf.taps[1].rf, 487);
    assert_eq!((rf.taps[2].rf, rf.taps[2].jump), (1607, 32));
    let last = rf.blocks.last().unwrap();
    assert_eq!(last.block, "s4.2");
    assert_eq!(last.input_rf, 1223);
    assert_eq!(last.branches, vec![(1, 1351), (3, 1479), (5, 1607)]);
    assert!(rf.to_text().contains("s4 output: rf 1607"));
}

#[test]
fn single_conv_erf_is_three_by_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = Tensor::uniform([2, 3, 3, 3], 0.1, 1.0, &mut rng);
    let x = Tensor::uniform([1, 3, 9, 9], -1.0, 1.0, &mut rng);
    let map = erf_from(&x, (4, 4), |g, x| {
        let w = g.param("w", w.clone());
        g.conv2d(x, w, None, ConvSpec::new(3, 2, 3))
    })
    .unwrap();
    assert_eq!(support_box(&map), Some((3, 5, 3, 5)));
    assert_eq!(map.data().iter().filter(|v| **v != 0.0).count(), 9);
}

/// Number of tap paths from output `(uy, ux)` through two 3x3 layers (the
/// second with dilation `d2`) to each input pixel, intermediates in bounds.
fn path_counts(h: usize, w: usize, unit: (usize, usize), d2: i64) -> Vec<f32> {
    let mut out = vec![0.0; h * w];
    let inb = |y: i64, x: i64| y >= 0 && x >= 0 && y < h as i64 && x < w as i64;
    for a in -1..=1i64 {
        for b in -1..=1i64 {
            let (my, mx) = (unit.0 as i64 + a * d2, unit.1 as i64 + b * d2);
            if !inb(my, mx) {
                continue;
            }
            for c in -1..=1i64 {
                for e in -1..=1i64 {
                    let (py, px) = (my + c, mx + e);
                    if inb(py, px) {
                        out[py as usize * w + px as usize] += 1.0;
                    }
                }
            }
        }
    }
    out
}

#[test]
fn linear_ones_network_counts_paths() {
    let (h, w) = (6, 7);
    let x = Tensor::full([1, 3, h, w], 0.5);
    for d2 in [1usize, 2] {
        for unit in [(0, 1), (3, 3), (5, 6)] {
            let map = erf_from(&x, unit, |g, x| {
                let w1 = g.param("w1", Tensor::full([1, 3, 3, 3], 1.0));
                let w2 = g.param("w2", Tensor::full([1, 1, 3, 3], 1.0));
                let y = g.conv2d(x, w1, None, same(3, 1, 3, 1, 1))?;
                g.conv2d(y, w2, None, same(1, 1, 3, 1, d2))
            })
            .unwrap();
            let want: Vec<f32> = path_counts(h, w, unit, d2 as i64).iter().map(|c| 3.0 * c).collect();
            assert_eq!(map.data(), want.as_slice(), "d2 {d2} unit {unit:?}");
        }
    }
}

#[test]
fn network_erf_stays_inside_window() {
    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let store = build(&cfg, 3).unwrap();
    let x = Tensor::uniform([1, 3, 128, 128], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
    let rf = network_rf(&cfg).unwrap();
    let tap = &rf.taps[0];
    assert_eq!((tap.rf, tap.jump), (39, 8));
    let map = erf_map(&store, &cfg, &x, ErfTap::S2, (8, 8)).unwrap();
    let (y0, y1, x0, x1) = support_box(&map).expect("non-empty support");
    let (lo, hi) = tap.window(8);
    assert_eq!((lo, hi), (45.0, 83.0));
    for v in [y0, y1, x0, x1] {
        assert!(v as f64 >= lo && v as f64 <= hi, "{:?} outside [{lo}, {hi}]", (y0, y1, x0, x1));
    }
    assert!(erf_map(&store, &cfg, &x, ErfTap::S2, (16, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stacked_erf_support_within_theoretical_window(
        layers in prop::collection::vec((prop::sample::select(vec![1usize, 3]), 1usize..=2, 1usize..=3), 1..=3),
        uy in 0usize..4,
        ux in 0usize..4,
    ) {
        let x = Tensor::full([1, 1, 24, 24], 1.0);
        let geom: Vec<RfLayer> = layers.iter().map(|&(k, s, d)| RfLayer::new("l", k, s, d)).collect();
        let rf = theoretical_rf(&geom);
        let map = erf_from(&x, (uy, ux), |g, x| {
            let mut y = x;
            for (i, &(k, s, d)) in layers.iter().enumerate() {
                let w = g.param(&format!("w{i}"), Tensor::full([1, 1, k, k], 1.0));
                y = g.conv2d(y, w, None, same(1, 1, k, s, d))?;
            }
            Ok(y)
        }).unwrap();
        let (y0, y1, x0, x1) = support_box(&map).unwrap();
        let (ylo, yhi) = rf.window(uy);
        let (xlo, xhi) = rf.window(ux);
        prop_assert!(y0 as f64 >= ylo && y1 as f64 <= yhi);
        prop_assert!(x0 as f64 >= xlo && x1 as f64 <= xhi);
    }
}

#[test]
fn branch_histograms_follow_weight_split() {
    let cfg = NetworkConfig::preset(Variant::Tiny, 4).with_probe();
    let mut store = build(&cfg, 0).unwrap();
    // branch 0 weights 0, branch 1 weights 1, branch 2 weights -0.5, in every s2 block
    let rr = 24;
    for b in 0..cfg.repeats(0).unwrap() {
        let w = store.get_mut(&format!("s2.{b}.pw.conv.weight")).unwrap();
        let cin = w.shape()[1];
        assert_eq!(cin, 3 * rr);
        for (i, v) in w.data_mut().iter_mut().enumerate() {
            *v = [0.0, 1.0, -0.5][(i % cin) / rr];
        }
    }
    let stats = branch_weight_stats(&store, &cfg, 2).unwrap();
    assert_eq!(stats.len(), 9);
    let s2: Vec<_> = stats.iter().filter(|h| h.stage == "s2").collect();
    assert_eq!(s2[0].bin_edges, vec![0.0, 0.5, 1.0]);
    assert_eq!(s2[0].pmf, vec![1.0, 0.0]);
    assert_eq!(s2[1].pmf, vec![0.0, 1.0]);
    assert_eq!(s2[2].pmf, vec![0.0, 1.0]);
    assert_eq!(s2.iter().map(|h| h.dilation).collect::<Vec<_>>(), vec![1, 3, 5]);

    for h in &stats {
        assert!((h.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(h.cdf.windows(2).all(|p| p[0] <= p[1]));
        assert_eq!(*h.cdf.last().unwrap(), 1.0);
        let same_stage: Vec<_> = stats.iter().filter(|o| o.stage == h.stage).collect();
        assert!(same_stage.iter().all(|o| o.bin_edges == h.bin_edges && o.count == h.count));
    }
    let per_stage: usize = stats.iter().filter(|h| h.stage == "s3").map(|h| h.count).sum();
    let w = store.get("s3.0.pw.conv.weight").unwrap();
    assert_eq!(per_stage, cfg.repeats(1).unwrap() * w.len());
    let json = serde_json::to_value(&stats[4]).unwrap();
    for key in ["stage", "branch", "bin_edges", "pmf", "cdf"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert!(branch_weight_stats(&build(&NetworkConfig::preset(Variant::Tiny, 4), 0).unwrap(), &NetworkConfig::preset(Variant::Tiny, 4), 8).is_err());
}

#[test]
fn signed_grey_levels() {
    let t = Tensor::from_vec([1, 1, 1, 4], vec![-2.0, 0.0, 1.0, 2.0]).unwrap();
    assert_eq!(signed_grey(&t, 0, 0, 2.0).data, vec![1, 128, 192, 255]);
    assert_eq!(signed_grey(&t, 0, 0, 0.0).data, vec![128; 4]);
}

#[test]
fn heatmap_export_writes_marked_maps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = NetworkConfig::preset(Variant::Tiny, 4);
    let store = build(&cfg, 1).unwrap();
    let x = Tensor::uniform([1, 3, 64, 64], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let out = dump_feature_heatmaps(&store, &cfg, &x, "s3.1", dir.path()).unwrap();
    assert_eq!(out.maps.len(), 2);
    let channels: usize = out.maps.iter().map(|(_, t)| t.c()).sum();
    assert_eq!(out.files.len(), 2 + channels);

    let mut g = Graph::inference();
    let xv = g.input(x.clone());
    dwrseg::network::forward(&mut g, &store, &cfg, xv, dwrseg::engine::Mode::Eval).unwrap();
    let rr = g.value(g.marked("s3.1.rr").unwrap());
    assert!(load_nt(dir.path().join("s3.1.rr.nt")).unwrap().bitwise_eq(rr));
    let pgm = read_pgm(dir.path().join("s3.1.sr.c000.pgm")).unwrap();
    assert_eq!((pgm.h, pgm.w), (4, 4));

    // SIR blocks only record the region map
    let sir = dump_feature_heatmaps(&store, &cfg, &x, "s2.0", &dir.path().join("sir")).unwrap();
    assert_eq!(sir.maps.len(), 1);
    assert!(dump_feature_heatmaps(&store, &cfg, &x, "s9.0", dir.path()).is_err());
}
