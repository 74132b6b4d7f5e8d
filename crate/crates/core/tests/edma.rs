mod common;

use common::explicit_edma;
use lrdecay::edma::{asymptotic_variance_factor, simulate_variance, variance_factor, EdmaState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(beta: f64, stream: &[f64]) -> Vec<f64> {
    let mut s = EdmaState::new(beta).unwrap();
    stream
        .iter()
        .map(|&l| {
            s = s.push(l).unwrap();
            s.corrected().unwrap()
        })
        .collect()
}

#[test]
fn recursive_matches_explicit_weighted_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let beta = rng.random_range(0.05..0.99);
        let len = rng.random_range(1..200);
        let stream: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..5.0)).collect();
        let got = run(beta, &stream);
        for t in 1..=len {
            let want = explicit_edma(beta, &stream[..t]);
            assert!(
                (got[t - 1] - want).abs() <= 1e-10 * want.abs().max(1e-300),
                "beta={beta} t={t}"
            );
        }
    }
}

#[test]
fn accumulator_divided_by_correction_equals_carried_estimate() {
    let stream = [2.0, 1.5, 1.7, 0.9, 1.1, 1.0];
    let mut s = EdmaState::new(0.8).unwrap();
    for (i, &l) in stream.iter().enumerate() {
        s = s.push(l).unwrap();
        let ratio = s.accumulator() / (1.0 - 0.8f64.powi(i as i32 + 1));
        assert!((ratio - s.corrected().unwrap()).abs() < 1e-14);
    }
}

#[test]
fn single_precision_tracks_double() {
    let stream: Vec<f64> = (0..50).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    let mut s32 = EdmaState::new(0.9f32).unwrap();
    let mut s64 = EdmaState::new(0.9f64).unwrap();
    for &l in &stream {
        s32 = s32.push(l as f32).unwrap();
        s64 = s64.push(l).unwrap();
        assert!((s32.corrected().unwrap() as f64 - s64.corrected().unwrap()).abs() < 1e-5);
    }
}

#[test]
fn corrected_estimate_is_unbiased_under_noise() {
    // mean of the corrected estimate over many noisy trials equals the clean level
    let (beta, level, trials) = (0.9, 3.0, 20_000);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sums = [0.0f64; 10];
    for _ in 0..trials {
        let stream: Vec<f64> = (0..10)
            .map(|_| level + rng.random_range(-1.0..1.0))
            .collect();
        for (s, g) in sums.iter_mut().zip(run(beta, &stream)) {
            *s += g;
        }
    }
    for (t, s) in sums.iter().enumerate() {
        let mean = s / trials as f64;
        // uniform(-1, 1) has variance 1/3; allow 5 standard errors
        let se = (variance_factor(beta, t as u64 + 1).unwrap() / 3.0 / trials as f64).sqrt();
        assert!((mean - level).abs() < 5.0 * se, "t={} mean={mean}", t + 1);
    }
}

#[test]
fn monte_carlo_variance_follows_closed_form() {
    let rows = simulate_variance(0.9, 2.0, 30, 20_000, 11).unwrap();
    for r in &rows {
        let rel = (r.empirical - r.predicted).abs() / r.predicted;
        assert!(rel < 0.05, "t={} rel={rel}", r.t);
    }
    for r in &rows {
        assert_eq!(r.predicted, 2.0 * variance_factor(0.9, r.t).unwrap());
    }
}

proptest! {
    #[test]
    fn constant_stream_is_fixed_point(c in -100.0f64..100.0, beta in 0.01f64..0.999, len in 1usize..300) {
        for g in run(beta, &vec![c; len]) {
            prop_assert_eq!(g, c);
        }
    }

    #[test]
    fn first_estimate_equals_first_loss(l in -1e6f64..1e6, beta in 0.01f64..0.999) {
        prop_assert_eq!(run(beta, &[l])[0], l);
    }

    #[test]
    fn estimate_stays_within_observed_range(
        stream in prop::collection::vec(0.0f64..10.0, 1..100),
        beta in 0.01f64..0.999,
    ) {
        let (lo, hi) = stream.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        for g in run(beta, &stream) {
            prop_assert!(g >= lo - 1e-9 && g <= hi + 1e-9);
        }
    }

    #[test]
    fn variance_factor_between_limit_and_one(beta in 0.01f64..0.999, t in 1u64..10_000) {
        let v = variance_factor(beta, t).unwrap();
        let limit = asymptotic_variance_factor(beta).unwrap();
        prop_assert!(v <= 1.0 + 1e-12 && v >= limit - 1e-12);
    }
}
