//! Metric invariants.

use proptest::prelude::*;
use synergy_core::metrics::{average_accuracy, ece, layer_drift, task_probabilities, tradeoff, TaskMatrix};
use synergy_core::models::build_mlp;

#[test]
fn ece_hand_case() {
    // (0.9 on the true class) and (0.6 on a wrong class) land in bins 9 and 6.
    let probs = [0.9, 0.1, 0.4, 0.6];
    let (e, bins) = ece(&probs, 2, &[0, 0], 10).unwrap();
    assert!((e - 0.35).abs() < 1e-12, "{e}");
    assert_eq!(bins.counts.iter().sum::<usize>(), 2);
    assert_eq!(bins.counts[8], 1);
    assert_eq!(bins.counts[5], 1);
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

proptest! {
    #[test]
    fn tradeoff_is_bounded_by_its_inputs(s in 0.01f64..100.0, p in 0.01f64..100.0) {
        let t = tradeoff(s, p);
        prop_assert!(t >= s.min(p) - 1e-9 && t <= s.max(p) + 1e-9);
        if s == p {
            prop_assert!((t - s).abs() < 1e-9);
        } else {
            prop_assert!(t < s.max(p) && t > s.min(p));
        }
    }

    #[test]
    fn average_accuracy_is_permutation_covariant(row in proptest::collection::vec(0.0f64..100.0, 1..8), rot in 0usize..8) {
        let n = row.len();
        let mut rows = vec![vec![None; n]; n];
        rows[n - 1] = row.iter().map(|v| Some(*v)).collect();
        let a = average_accuracy(&TaskMatrix::from_rows(rows.clone()).unwrap()).unwrap();
        rows[n - 1].rotate_left(rot % n);
        let b = average_accuracy(&TaskMatrix::from_rows(rows).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn ece_ignores_sample_order(
        logits in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 1..30),
        labels_seed in any::<u64>(),
        shift in 0usize..30,
    ) {
        let n = logits.len();
        let labels: Vec<usize> = (0..n).map(|i| ((labels_seed >> (i % 60)) as usize + i) % 3).collect();
        let probs: Vec<f64> = logits.iter().flat_map(|r| softmax(r)).collect();
        let (e1, _) = ece(&probs, 3, &labels, 10).unwrap();
        let k = shift % n;
        let mut p2 = probs.clone();
        p2.rotate_left(3 * k);
        let mut l2 = labels.clone();
        l2.rotate_left(k);
        let (e2, _) = ece(&p2, 3, &l2, 10).unwrap();
        prop_assert!((e1 - e2).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&e1));
    }

    #[test]
    fn task_probabilities_partition_mass(
        logits in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 6), 1..20),
        split in 1usize..6,
    ) {
        let probs: Vec<f64> = logits.iter().flat_map(|r| softmax(r)).collect();
        let map: Vec<Option<usize>> = (0..6).map(|c| Some(usize::from(c >= split))).collect();
        let tp = task_probabilities(&probs, 6, &map).unwrap();
        prop_assert_eq!(tp.len(), 2);
        prop_assert!((tp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn layer_drift_scale_invariance(seed_a in any::<u64>(), seed_b in any::<u64>(), c in 0.01f64..50.0) {
        let a = build_mlp::<f64>(5, 4, 3, seed_a).unwrap();
        let b = build_mlp::<f64>(5, 4, 3, seed_b).unwrap();
        prop_assert_eq!(layer_drift(&a, &a).unwrap(), 1.0);
        let mut scaled = a.clone();
        let flat: Vec<f64> = a.flat_params().iter().map(|v| v * c).collect();
        scaled.set_flat_params(&flat).unwrap();
        prop_assert!((layer_drift(&a, &scaled).unwrap() - 1.0).abs() < 1e-12);
        let ab = layer_drift(&a, &b).unwrap();
        let ba = layer_drift(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
    }
}
