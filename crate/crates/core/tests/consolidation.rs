//! Filter-level Fisher adjustment on randomly shaped CNNs, and the fast
//! Fisher estimator against the per-sample reference.

use proptest::prelude::*;
use synergy_core::consolidation::{adjust_fisher, estimate_fisher, estimate_fisher_per_sample};
use synergy_core::models::{build_small_cnn, FilterMap, Layer, Network, ParamRole};
use synergy_core::par::Exec;
use synergy_core::Tensor;

fn random_cnn(channels: usize, size: usize, classes: usize, seed: u64) -> Network<f64> {
    build_small_cnn(channels, size, classes, seed).unwrap()
}

fn conv_weight_ranges(net: &Network<f64>) -> Vec<std::ops::Range<usize>> {
    let offsets = net.param_offsets();
    net.param_ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| id.role == ParamRole::Weight && matches!(net.layers()[id.layer], Layer::Conv2d { .. }))
        .map(|(k, _)| offsets[k]..offsets[k] + net.params()[k].numel())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjusted_fisher_properties(
        channels in 1usize..4,
        size in 4usize..12,
        classes in 2usize..6,
        seed in any::<u64>(),
        values in proptest::collection::vec(0.0f64..10.0, 1..64),
    ) {
        let net = random_cnn(channels, size, classes, seed);
        let map = FilterMap::of(&net);
        let n = net.param_count();
        let f: Vec<f64> = (0..n).map(|i| values[i % values.len()] * (1.0 + (i % 7) as f64)).collect();
        let adj = adjust_fisher(&f, &map).unwrap().f_adj;
        prop_assert_eq!(adj.len(), n);

        let conv = conv_weight_ranges(&net);
        let mut in_filter = vec![false; n];
        for r in map.filters() {
            // Within-filter uniformity and per-filter mass preservation.
            let first = adj[r.start];
            prop_assert!(adj[r.clone()].iter().all(|v| *v == first));
            let before: f64 = f[r.clone()].iter().sum();
            let after: f64 = adj[r.clone()].iter().sum();
            prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
            // Every filter lies inside one conv weight tensor.
            prop_assert!(conv.iter().any(|c| c.start <= r.start && r.end <= c.end));
            for i in r.clone() {
                in_filter[i] = true;
            }
        }
        // Conv weights are fully covered by filters; everything else passes through.
        for c in &conv {
            prop_assert!(c.clone().all(|i| in_filter[i]));
        }
        for i in 0..n {
            if !in_filter[i] {
                prop_assert_eq!(adj[i], f[i]);
            }
        }
        let total_before: f64 = f.iter().sum();
        let total_after: f64 = adj.iter().sum();
        prop_assert!((total_before - total_after).abs() <= 1e-9 * total_before.max(1.0));
    }

    #[test]
    fn fast_fisher_matches_per_sample(
        seed in any::<u64>(),
        n in 1usize..6,
        size in 4usize..8,
        chunk in 1usize..4,
    ) {
        let net = random_cnn(1, size, 3, seed);
        let data: Vec<f64> = (0..n * size * size).map(|i| ((i as f64 * 0.713 + seed as f64 * 1e-9).sin() + 1.0) / 2.0).collect();
        let x = Tensor::new(vec![n, 1, size, size], data).unwrap();
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let fast = estimate_fisher(&net, &x, &y, chunk, Exec::Sequential).unwrap();
        let slow = estimate_fisher_per_sample(&net, &x, &y, Exec::Sequential).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        prop_assert!(fast.iter().all(|v| *v >= 0.0));
    }
}
