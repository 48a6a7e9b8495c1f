mod common;

use mtsurv::net::{
    combined_loss, efron_batch_loss, penalty, ranking_loss, Activation, Architecture, BatchTargets,
    HiddenLayer, LossWeights, NetworkState, RankOrientation, S1Mode,
};
use mtsurv::survival::{survival_labels_for, LabelMatrix};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{finite_difference, random_outcomes, relative_error, untied_partial_nll};

const H: f64 = 1e-5;

fn random_labels(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> (Vec<f64>, Vec<bool>, LabelMatrix) {
    let (times, events) = random_outcomes(rng, n, (2 * horizon) as u32, 0.4);
    let labels = survival_labels_for(&times, &events, 1.0, horizon).unwrap();
    (times, events, labels)
}

#[test]
fn efron_batch_gradient_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for mode in [S1Mode::LogHazard, S1Mode::Hazard] {
        for case in 0..20 {
            let n = rng.random_range(2..40);
            let (times, mut events) = random_outcomes(&mut rng, n, 4, 0.3);
            events[0] = true;
            let s1: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (_, analytic) = efron_batch_loss(&s1, &times, &events, mode).unwrap().unwrap();
            let numeric = finite_difference(
                &mut |v| efron_batch_loss(v, &times, &events, mode).unwrap().unwrap().0,
                &s1,
                H,
            );
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-5, "{mode:?} case {case}: {err:e}");
        }
    }
}

#[test]
fn ranking_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    while checked < 20 {
        let n = rng.random_range(2..30);
        let horizon = rng.random_range(1..8);
        let (_, _, labels) = random_labels(&mut rng, n, horizon);
        let s2 = Array2::from_shape_simple_fn((n, horizon), || rng.random_range(0.0..1.0));
        let orientation = if checked % 2 == 0 {
            RankOrientation::SurvivorFirst
        } else {
            RankOrientation::EventFirst
        };
        let r = ranking_loss(s2.view(), &labels, orientation).unwrap();
        if r.pairs == 0 {
            continue;
        }
        let flat = s2.iter().copied().collect::<Vec<_>>();
        let numeric = finite_difference(
            &mut |v| {
                let m = Array2::from_shape_vec((n, horizon), v.to_vec()).unwrap();
                ranking_loss(m.view(), &labels, orientation).unwrap().loss
            },
            &flat,
            H,
        );
        let analytic: Vec<f64> = r.grad.iter().copied().collect();
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "case {checked}: {err:e}");
        checked += 1;
    }
}

fn random_architecture(rng: &mut ChaCha8Rng, input_dim: usize, horizon: usize) -> Architecture {
    let depth = rng.random_range(0..3);
    let hidden = (0..depth)
        .map(|_| HiddenLayer {
            width: rng.random_range(2..7),
            activation: if rng.random_bool(0.5) {
                Activation::Relu
            } else {
                Activation::Tanh
            },
            dropout: if rng.random_bool(0.5) { 0.3 } else { 0.0 },
            batch_norm: rng.random_bool(0.5),
        })
        .collect();
    Architecture {
        input_dim,
        hidden,
        horizon,
        s1_mode: if rng.random_bool(0.5) {
            S1Mode::LogHazard
        } else {
            S1Mode::Hazard
        },
    }
}

#[test]
fn end_to_end_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..30 {
        let n = if case < 10 { 4 } else { rng.random_range(3..12) };
        let d = rng.random_range(1..5);
        let horizon = rng.random_range(1..6);
        let arch = random_architecture(&mut rng, d, horizon);
        let state = NetworkState::new(arch.clone(), case).unwrap();
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        let (times, mut events, labels) = random_labels(&mut rng, n, horizon);
        events[0] = true;
        let masks = state.sample_dropout_masks(n, &mut rng);
        let weights = LossWeights {
            efron: 1.0,
            rank: rng.random_range(0.0..2.0),
            l1: 0.01,
            l2: 0.05,
            s1_mode: arch.s1_mode,
            orientation: RankOrientation::SurvivorFirst,
        };
        let targets = BatchTargets {
            times: &times,
            events: &events,
            labels: &labels,
        };

        let cache = state.forward_with_masks(x.view(), true, &masks).unwrap();
        let (_, g1, g2) = combined_loss(
            cache.s1.as_slice().unwrap(),
            cache.s2.view(),
            &targets,
            &state.params,
            &weights,
            None,
        )
        .unwrap();
        let mut grads = state.backward(&cache, &g1, g2.view()).unwrap();
        penalty(&state.params, weights.l1, weights.l2, Some(&mut grads));

        let mut probe = state.clone();
        let numeric = finite_difference(
            &mut |flat| {
                probe.params.set_flat(flat).unwrap();
                let c = probe.forward_with_masks(x.view(), true, &masks).unwrap();
                combined_loss(
                    c.s1.as_slice().unwrap(),
                    c.s2.view(),
                    &targets,
                    &probe.params,
                    &weights,
                    None,
                )
                .unwrap()
                .0
                .total
            },
            &state.params.to_flat(),
            H,
        );
        let err = relative_error(&grads.to_flat(), &numeric);
        assert!(err < 1e-5, "case {case} {arch:?}: {err:e}");
    }
}

#[test]
fn eval_mode_gradient() {
    // Batch norm on running statistics is an affine map.
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for case in 0..5 {
        let arch = Architecture {
            input_dim: 3,
            hidden: vec![HiddenLayer {
                width: 4,
                activation: Activation::Tanh,
                dropout: 0.2,
                batch_norm: true,
            }],
            horizon: 3,
            s1_mode: S1Mode::LogHazard,
        };
        let mut state = NetworkState::new(arch, case).unwrap();
        let warm = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0));
        let c = state.forward(warm.view(), true, &mut rng).unwrap();
        state.update_running_stats(&c);
        let x = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-1.0..1.0));
        let up1: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up2 = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-1.0..1.0));
        let objective = |s: &NetworkState| {
            let c = s.forward_with_masks(x.view(), false, &[]).unwrap();
            c.s1.iter().zip(&up1).map(|(a, b)| a * b).sum::<f64>() + (&c.s2 * &up2).sum()
        };
        let cache = state.forward_with_masks(x.view(), false, &[]).unwrap();
        let grads = state.backward(&cache, &up1, up2.view()).unwrap();
        let mut probe = state.clone();
        let numeric = finite_difference(
            &mut |flat| {
                probe.params.set_flat(flat).unwrap();
                objective(&probe)
            },
            &state.params.to_flat(),
            H,
        );
        assert!(relative_error(&grads.to_flat(), &numeric) < 1e-5);
    }
}

#[test]
fn untied_batch_equals_partial_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..50 {
        let n = rng.random_range(2..32);
        let mut times: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for i in (1..n).rev() {
            times.swap(i, rng.random_range(0..=i));
        }
        let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        events[0] = true;
        let s1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (loss, _) = efron_batch_loss(&s1, &times, &events, S1Mode::LogHazard)
            .unwrap()
            .unwrap();
        assert!((loss - untied_partial_nll(&s1, &times, &events)).abs() < 1e-12);
    }
}

#[test]
fn rank_weight_zero_is_efron_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let (times, mut events, labels) = random_labels(&mut rng, 10, 4);
    events[2] = true;
    let state = NetworkState::new(random_architecture(&mut rng, 2, 4), 1).unwrap();
    let x = Array2::from_shape_simple_fn((10, 2), || rng.random_range(-1.0..1.0));
    let (s1, s2) = state.predict(x.view()).unwrap();
    let targets = BatchTargets {
        times: &times,
        events: &events,
        labels: &labels,
    };
    let efron_only = LossWeights {
        rank: 0.0,
        s1_mode: state.architecture.s1_mode,
        ..Default::default()
    };
    let (a, _, g2) = combined_loss(s1.as_slice().unwrap(), s2.view(), &targets, &state.params, &efron_only, None)
        .unwrap();
    let (b, _) = efron_batch_loss(s1.as_slice().unwrap(), &times, &events, state.architecture.s1_mode)
        .unwrap()
        .unwrap();
    assert!((a.total - b).abs() < 1e-12);
    assert!(g2.iter().all(|&v| v == 0.0));
}

proptest! {
    #[test]
    fn ranking_is_permutation_symmetric(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..20);
        let (_, _, labels) = random_labels(&mut rng, n, 5);
        let s2 = Array2::from_shape_simple_fn((n, 5), || rng.random_range(0.0..1.0));
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let a = ranking_loss(s2.view(), &labels, RankOrientation::SurvivorFirst).unwrap();
        let s2p = s2.select(ndarray::Axis(0), &perm);
        let b = ranking_loss(s2p.view(), &labels.select_rows(&perm), RankOrientation::SurvivorFirst).unwrap();
        prop_assert_eq!(a.pairs, b.pairs);
        prop_assert!((a.loss - b.loss).abs() < 1e-12);
    }

    #[test]
    fn ranking_zero_at_exact_margin(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..20);
        let (_, _, labels) = random_labels(&mut rng, n, 4);
        // Survivors at 1, events at 0: every acceptable pair sits at margin 1.
        let s2 = labels.labels.clone();
        let r = ranking_loss(s2.view(), &labels, RankOrientation::SurvivorFirst).unwrap();
        prop_assert_eq!(r.loss, 0.0);
        if r.pairs > 0 {
            let mut shifted = s2.clone();
            shifted.mapv_inplace(|v| v * 0.9);
            prop_assert!(ranking_loss(shifted.view(), &labels, RankOrientation::SurvivorFirst).unwrap().loss > 0.0);
        }
    }
}
