//! Reservoir statistics and EMA trajectories against closed-form oracles.

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use synergy_core::consolidation::{FisherInit, FisherState};
use synergy_core::memory::{EpisodicBuffer, SemanticMemory};
use synergy_core::models::{build_mlp, Network};

#[test]
fn inclusion_frequency_is_uniform() {
    let (items, capacity, trials) = (10_000usize, 100usize, 2_000u64);
    let mut counts = vec![0u64; items];
    for t in 0..trials {
        let mut buf = EpisodicBuffer::<f64>::new(capacity, 1_000 + t);
        for i in 0..items {
            buf.reservoir_add(&[1], &[i as f64], 0, None).unwrap();
        }
        assert_eq!(buf.len(), capacity);
        for k in 0..buf.len() {
            counts[buf.input(k)[0] as usize] += 1;
        }
    }
    let expected = trials as f64 * capacity as f64 / items as f64;
    let mean_freq = counts.iter().sum::<u64>() as f64 / (items as f64 * trials as f64);
    assert!((mean_freq - 0.01).abs() < 1e-12);
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((items - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi-square {chi2}, p = {p}");
}

#[test]
fn insertion_probability_at_double_capacity() {
    // The 1000th offer into B=500 is kept with probability 1/2.
    let trials = 4_000u64;
    let mut kept = 0u64;
    for t in 0..trials {
        let mut buf = EpisodicBuffer::<f64>::new(500, t);
        for i in 0..999 {
            buf.reservoir_add(&[1], &[i as f64], 0, None).unwrap();
        }
        if buf.reservoir_add(&[1], &[999.0], 0, None).unwrap() {
            kept += 1;
        }
        assert_eq!(buf.seen(), 1000);
    }
    let p = 0.5;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    assert!((kept as f64 - trials as f64 * p).abs() < 3.0 * sigma, "kept {kept} of {trials}");
}

#[test]
fn buffer_tracks_stream_class_distribution() {
    let (n, classes, capacity, seeds) = (60_000usize, 10usize, 500usize, 20u64);
    let mut total_kl = 0.0;
    for s in 0..seeds {
        let mut buf = EpisodicBuffer::<f64>::new(capacity, 77 + s);
        for i in 0..n {
            buf.reservoir_add(&[1], &[0.0], i % classes, None).unwrap();
        }
        let counts = buf.class_counts(classes);
        let q = 1.0 / classes as f64;
        let kl: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / capacity as f64;
                p * (p / q).ln()
            })
            .sum();
        total_kl += kl;
    }
    let mean = total_kl / seeds as f64;
    assert!(mean < 0.05, "mean KL {mean}");
}

#[test]
fn replay_draws_are_uniform() {
    let mut buf = EpisodicBuffer::<f64>::new(10, 5);
    for i in 0..10 {
        buf.reservoir_add(&[1], &[i as f64], i, None).unwrap();
    }
    let draws = 10_000usize;
    let mut counts = [0usize; 10];
    for _ in 0..draws {
        let b = buf.sample_batch(1).unwrap();
        counts[b.labels[0]] += 1;
    }
    let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
    for c in counts {
        assert!((c as f64 - draws as f64 * 0.1).abs() < 3.0 * sigma, "{counts:?}");
    }
}

fn net(seed: u64) -> Network<f64> {
    build_mlp(3, 4, 2, seed).unwrap()
}

#[test]
fn semantic_ema_matches_geometric_series() {
    let alpha = 0.9;
    let start = net(1);
    let mut mem = SemanticMemory::new(&start, alpha, 1.0, 3).unwrap();
    let mut working = start.clone();
    let theta0 = start.flat_params();
    let mut history: Vec<Vec<f64>> = Vec::new();
    for k in 0..50 {
        let w: Vec<f64> = theta0.iter().enumerate().map(|(i, v)| v + (k as f64 * 0.37 + i as f64).sin()).collect();
        working.set_flat_params(&w).unwrap();
        history.push(w);
        assert!(mem.maybe_update(&working).unwrap());
        let n = history.len() as i32;
        // θ_k = αⁿθ₀ + Σ_j (1−α)α^(n−1−j) w_j
        let got = mem.model().flat_params();
        for i in 0..theta0.len() {
            let mut want = alpha.powi(n) * theta0[i];
            for (j, h) in history.iter().enumerate() {
                want += (1.0 - alpha) * alpha.powi(n - 1 - j as i32) * h[i];
            }
            assert!((got[i] - want).abs() < 1e-10, "step {k} param {i}: {} vs {want}", got[i]);
        }
    }
}

#[test]
fn fisher_ema_matches_geometric_series() {
    let alpha = 0.99;
    let model = net(2);
    let n = model.param_count();
    for init in [FisherInit::FirstAssign, FisherInit::ZeroEma] {
        let mut state = FisherState::new(&model, alpha, 1.0, init, false, 4).unwrap();
        let mut fs: Vec<Vec<f64>> = Vec::new();
        for k in 0..40 {
            let f: Vec<f64> = (0..n).map(|i| 1.0 + ((k * 31 + i * 7) % 13) as f64).collect();
            state.merge(&f).unwrap();
            fs.push(f);
            let m = fs.len() as i32;
            for i in 0..n {
                let want = match init {
                    FisherInit::ZeroEma => {
                        fs.iter().enumerate().map(|(j, f)| (1.0 - alpha) * alpha.powi(m - 1 - j as i32) * f[i]).sum::<f64>()
                    }
                    FisherInit::FirstAssign => {
                        alpha.powi(m - 1) * fs[0][i]
                            + fs.iter().enumerate().skip(1).map(|(j, f)| (1.0 - alpha) * alpha.powi(m - 1 - j as i32) * f[i]).sum::<f64>()
                    }
                };
                assert!((state.f_star()[i] - want).abs() < 1e-10, "{init:?} step {k}");
            }
        }
    }
}

fn within_3_sigma(hits: u64, n: u64, r: f64) -> bool {
    let mean = n as f64 * r;
    let sigma = (n as f64 * r * (1.0 - r)).sqrt();
    if sigma == 0.0 {
        hits as f64 == mean
    } else {
        (hits as f64 - mean).abs() <= 3.0 * sigma
    }
}

#[test]
fn gate_frequencies_are_binomial() {
    let steps = 10_000u64;
    let model = net(3);
    for (k, r) in [0.005, 0.4, 0.8, 1.0].into_iter().enumerate() {
        let mut mem = SemanticMemory::new(&model, 0.99, r, 100 + k as u64).unwrap();
        let hits = (0..steps).filter(|_| mem.maybe_update(&model).unwrap()).count() as u64;
        assert!(within_3_sigma(hits, steps, r), "semantic r={r}: {hits}");
        assert_eq!(mem.updates(), hits);

        let mut fisher = FisherState::new(&model, 0.99, r, FisherInit::FirstAssign, true, 200 + k as u64).unwrap();
        let hits = (0..steps).filter(|_| fisher.gate()).count() as u64;
        assert!(within_3_sigma(hits, steps, r), "fisher r={r}: {hits}");
    }
}

proptest! {
    #[test]
    fn buffer_never_exceeds_capacity(capacity in 0usize..40, n in 0usize..300, seed in any::<u64>()) {
        let mut buf = EpisodicBuffer::<f64>::new(capacity, seed);
        for i in 0..n {
            buf.reservoir_add(&[1], &[i as f64], i % 3, None).unwrap();
            prop_assert!(buf.len() <= capacity);
        }
        prop_assert_eq!(buf.seen(), n as u64);
        prop_assert_eq!(buf.len(), capacity.min(n));
    }

    #[test]
    fn buffer_states_are_reproducible(capacity in 1usize..20, n in 0usize..200, seed in any::<u64>()) {
        let mut a = EpisodicBuffer::<f64>::new(capacity, seed);
        let mut b = EpisodicBuffer::<f64>::new(capacity, seed);
        for i in 0..n {
            let x = [i as f64 * 0.5];
            prop_assert_eq!(a.reservoir_add(&[1], &x, i % 5, None).unwrap(), b.reservoir_add(&[1], &x, i % 5, None).unwrap());
            prop_assert_eq!(a.labels(), b.labels());
        }
    }
}
