mod common;

use mtsurv::cox::{efron_nll, efron_nll_grad};
use mtsurv::efron::efron_nll_log_scores;
use mtsurv::survival::SurvivalDataset;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    finite_difference, linear_predictor, naive_efron, random_outcomes, relative_error,
    untied_partial_nll,
};

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, grid: u32) -> SurvivalDataset {
    let (times, mut events) = random_outcomes(rng, n, grid, 0.3);
    events[0] = true;
    let x = Array2::from_shape_simple_fn((n, p), || rng.random_range(-1.5..1.5));
    let names = (0..p).map(|j| format!("x{j}")).collect();
    SurvivalDataset::new(x, times, events, names, 1.0).unwrap()
}

#[test]
fn matches_literal_formula_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(2..60);
        let (times, mut events) = random_outcomes(&mut rng, n, 6, 0.3);
        events[n - 1] = true;
        let eta: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (nll, _) = efron_nll_log_scores(&eta, &times, &events).unwrap().unwrap();
        let oracle = naive_efron(&eta, &times, &events);
        assert!((nll - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()), "{nll} vs {oracle}");
    }
}

#[test]
fn untied_data_reduces_to_partial_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let p = 3;
        // Distinct times: a random permutation of 0..n.
        let mut times: Vec<f64> = (0..n).map(|i| i as f64 + 0.25).collect();
        for i in (1..n).rev() {
            times.swap(i, rng.random_range(0..=i));
        }
        let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        events[0] = true;
        let x = Array2::from_shape_simple_fn((n, p), || rng.random_range(-1.0..1.0));
        let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = SurvivalDataset::new(x.clone(), times.clone(), events.clone(), vec!["a".into(), "b".into(), "c".into()], 1.0)
            .unwrap();
        let value = efron_nll(&theta, &ds, 0.0).unwrap();
        let oracle = untied_partial_nll(&linear_predictor(&x, &theta), &times, &events);
        assert!((value - oracle).abs() < 1e-12, "{value} vs {oracle}");
    }
}

#[test]
fn cox_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..25 {
        let n = rng.random_range(5..80);
        let ds = random_dataset(&mut rng, n, 4, 8);
        let l2 = if case % 2 == 0 { 0.0 } else { 0.3 };
        let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = efron_nll_grad(&theta, &ds, l2).unwrap();
        let numeric = finite_difference(&mut |t| efron_nll(t, &ds, l2).unwrap(), &theta, 1e-5);
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "case {case}: relative error {err:e}");
    }
}

#[test]
fn log_score_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..25 {
        let n = rng.random_range(2..50);
        let (times, mut events) = random_outcomes(&mut rng, n, 5, 0.4);
        events[0] = true;
        let eta: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, analytic) = efron_nll_log_scores(&eta, &times, &events).unwrap().unwrap();
        let numeric = finite_difference(
            &mut |e| naive_efron(e, &times, &events),
            &eta,
            1e-5,
        );
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "case {case}: relative error {err:e}");
    }
}

proptest! {
    #[test]
    fn invariant_to_common_shift(shift in -50.0f64..50.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (times, mut events) = random_outcomes(&mut rng, 30, 5, 0.3);
        events[0] = true;
        let eta: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let shifted: Vec<f64> = eta.iter().map(|e| e + shift).collect();
        let (a, ga) = efron_nll_log_scores(&eta, &times, &events).unwrap().unwrap();
        let (b, gb) = efron_nll_log_scores(&shifted, &times, &events).unwrap().unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        prop_assert!(relative_error(&ga, &gb) < 1e-9);
    }

    #[test]
    fn gradient_sums_to_zero(seed in 0u64..1000) {
        // Shift invariance means the gradient is orthogonal to the ones vector.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (times, mut events) = random_outcomes(&mut rng, 25, 4, 0.3);
        events[3] = true;
        let eta: Vec<f64> = (0..25).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, g) = efron_nll_log_scores(&eta, &times, &events).unwrap().unwrap();
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-10);
    }
}
