use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{sigmoid, Params, S1Mode};
use crate::efron::efron_nll_log_scores;
use crate::error::{Result, SurvError};
use crate::survival::LabelMatrix;

const HAZARD_EPS: f64 = 1e-8;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Efron negative log partial likelihood of a batch, with risk sets and
/// tie groups formed inside the batch. `None` when the batch has no event.
pub fn efron_batch_loss(
    s1: &[f64],
    times: &[f64],
    events: &[bool],
    mode: S1Mode,
) -> Result<Option<(f64, Vec<f64>)>> {
    match mode {
        S1Mode::LogHazard => efron_nll_log_scores(s1, times, events),
        S1Mode::Hazard => {
            let log_s: Vec<f64> = s1.iter().map(|&v| (softplus(v) + HAZARD_EPS).ln()).collect();
            Ok(efron_nll_log_scores(&log_s, times, events)?.map(|(loss, g)| {
                let grad = g
                    .iter()
                    .zip(s1)
                    .map(|(&dl, &v)| dl * sigmoid(v) / (softplus(v) + HAZARD_EPS))
                    .collect();
                (loss, grad)
            }))
        }
    }
}

/// Which score is placed first in the ranking residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RankOrientation {
    /// `(s2[survivor] − s2[event] − 1)²`: survivors should score higher.
    #[default]
    SurvivorFirst,
    /// `(s2[event] − s2[survivor] − 1)²`.
    EventFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingLoss {
    pub loss: f64,
    pub grad: Array2<f64>,
    pub pairs: usize,
}

/// Squared-margin ranking loss over acceptable pairs, per threshold.
///
/// At threshold `t`, `(i, j)` is acceptable when both labels are visible,
/// `i` is known to survive past `t` and `j` had its event by `t`. The loss is
/// averaged over all acceptable pairs of the batch; with none it is 0.
pub fn ranking_loss(
    s2: ArrayView2<'_, f64>,
    labels: &LabelMatrix,
    orientation: RankOrientation,
) -> Result<RankingLoss> {
    if s2.dim() != labels.labels.dim() {
        return Err(SurvError::invalid(format!(
            "scores {:?} and labels {:?} differ in shape",
            s2.dim(),
            labels.labels.dim()
        )));
    }
    let (n, horizon) = s2.dim();
    let sign = match orientation {
        RankOrientation::SurvivorFirst => 1.0,
        RankOrientation::EventFirst => -1.0,
    };
    let mut grad = Array2::zeros((n, horizon));
    let mut total = 0.0;
    let mut pairs = 0usize;
    let mut pos = Vec::with_capacity(n);
    let mut neg = Vec::with_capacity(n);
    for t in 0..horizon {
        pos.clear();
        neg.clear();
        for i in 0..n {
            if labels.mask[[i, t]] {
                if labels.labels[[i, t]] == 1.0 {
                    pos.push(i);
                } else {
                    neg.push(i);
                }
            }
        }
        for &i in &pos {
            for &j in &neg {
                let r = sign * (s2[[i, t]] - s2[[j, t]]) - 1.0;
                total += r * r;
                grad[[i, t]] += 2.0 * r * sign;
                grad[[j, t]] -= 2.0 * r * sign;
            }
        }
        pairs += pos.len() * neg.len();
    }
    if pairs > 0 {
        let scale = 1.0 / pairs as f64;
        total *= scale;
        grad *= scale;
    }
    Ok(RankingLoss {
        loss: total,
        grad,
        pairs,
    })
}

/// `l1·Σ|w| + l2·Σw²` over dense weights; adds its gradient into `grads`.
pub fn penalty(params: &Params, l1: f64, l2: f64, grads: Option<&mut Params>) -> f64 {
    if l1 == 0.0 && l2 == 0.0 {
        return 0.0;
    }
    let mut value = 0.0;
    for (w, penalised) in params.tensors() {
        if penalised {
            value += w.iter().map(|v| l1 * v.abs() + l2 * v * v).sum::<f64>();
        }
    }
    if let Some(g) = grads {
        for ((w, penalised), (gw, _)) in params.tensors().into_iter().zip(g.tensors_mut()) {
            if penalised {
                for (gv, &v) in gw.iter_mut().zip(w) {
                    let sign = if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *gv += l1 * sign + 2.0 * l2 * v;
                }
            }
        }
    }
    value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight on the partial-likelihood term; 0 for a ranking-only model.
    pub efron: f64,
    pub rank: f64,
    pub l1: f64,
    pub l2: f64,
    pub s1_mode: S1Mode,
    pub orientation: RankOrientation,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            efron: 1.0,
            rank: 1.0,
            l1: 0.0,
            l2: 0.0,
            s1_mode: S1Mode::LogHazard,
            orientation: RankOrientation::SurvivorFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub efron: f64,
    pub rank: f64,
    pub penalty: f64,
    pub total: f64,
    /// The batch held no event, so the partial likelihood contributed nothing.
    pub efron_skipped: bool,
    pub rank_pairs: usize,
}

/// Observed outcomes of the records in a batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchTargets<'a> {
    pub times: &'a [f64],
    pub events: &'a [bool],
    pub labels: &'a LabelMatrix,
}

/// Weighted sum of the batch losses and the weight penalty, with the
/// upstream gradients on `s1` and `s2`. Penalty gradients are added to
/// `param_grads` when given.
pub fn combined_loss(
    s1: &[f64],
    s2: ArrayView2<'_, f64>,
    targets: &BatchTargets<'_>,
    params: &Params,
    weights: &LossWeights,
    param_grads: Option<&mut Params>,
) -> Result<(LossBreakdown, Vec<f64>, Array2<f64>)> {
    let mut out = LossBreakdown::default();
    let mut grad_s1 = vec![0.0; s1.len()];
    if weights.efron != 0.0 {
        match efron_batch_loss(s1, targets.times, targets.events, weights.s1_mode)? {
            Some((loss, g)) => {
                out.efron = loss;
                for (d, v) in grad_s1.iter_mut().zip(g) {
                    *d = weights.efron * v;
                }
            }
            None => out.efron_skipped = true,
        }
    }
    let mut grad_s2 = Array2::zeros(s2.dim());
    if weights.rank != 0.0 {
        let r = ranking_loss(s2, targets.labels, weights.orientation)?;
        out.rank = r.loss;
        out.rank_pairs = r.pairs;
        grad_s2 = r.grad * weights.rank;
    }
    out.penalty = penalty(params, weights.l1, weights.l2, param_grads);
    out.total = weights.efron * out.efron + weights.rank * out.rank + out.penalty;
    Ok((out, grad_s1, grad_s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn labels(l: Array2<f64>, m: Array2<bool>) -> LabelMatrix {
        LabelMatrix { labels: l, mask: m }
    }

    #[test]
    fn tied_batch_matches_cox_example() {
        let (loss, _) = efron_batch_loss(&[0.0; 3], &[1.0, 1.0, 2.0], &[true, true, false], S1Mode::LogHazard)
            .unwrap()
            .unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
        // Hazard mode: choose s1 with softplus(s1) + eps = 1.
        let v = (1.0 - HAZARD_EPS).exp_m1().ln();
        let (loss, _) = efron_batch_loss(&[v; 3], &[1.0, 1.0, 2.0], &[true, true, false], S1Mode::Hazard)
            .unwrap()
            .unwrap();
        assert!((loss - 1.791759).abs() < 1e-6);
    }

    #[test]
    fn lone_event_has_zero_loss() {
        let (loss, grad) = efron_batch_loss(&[2.5], &[3.0], &[true], S1Mode::Hazard).unwrap().unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0]);
    }

    #[test]
    fn no_event_batch_is_skipped() {
        assert!(efron_batch_loss(&[0.1, 0.2], &[1.0, 2.0], &[false, false], S1Mode::LogHazard)
            .unwrap()
            .is_none());
    }

    #[test]
    fn ranking_exact_margin_is_zero() {
        let l = labels(array![[1.0], [0.0]], array![[true], [true]]);
        let r = ranking_loss(array![[1.0], [0.0]].view(), &l, RankOrientation::SurvivorFirst).unwrap();
        assert_eq!((r.loss, r.pairs), (0.0, 1));
        let r = ranking_loss(array![[0.5], [0.5]].view(), &l, RankOrientation::SurvivorFirst).unwrap();
        assert_eq!(r.loss, 1.0);
    }

    #[test]
    fn ranking_all_censored_is_zero() {
        let l = labels(Array2::zeros((3, 2)), Array2::from_elem((3, 2), false));
        let r = ranking_loss(Array2::from_elem((3, 2), 0.3).view(), &l, RankOrientation::SurvivorFirst).unwrap();
        assert_eq!((r.loss, r.pairs), (0.0, 0));
        assert!(r.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn orientation_flips_target() {
        let l = labels(array![[1.0], [0.0]], array![[true], [true]]);
        let r = ranking_loss(array![[0.0], [1.0]].view(), &l, RankOrientation::EventFirst).unwrap();
        assert_eq!(r.loss, 0.0);
    }

    #[test]
    fn penalties_only_without_signal() {
        let state = super::super::NetworkState::new(
            super::super::Architecture {
                input_dim: 2,
                hidden: vec![],
                horizon: 1,
                s1_mode: S1Mode::LogHazard,
            },
            0,
        )
        .unwrap();
        let l = labels(Array2::zeros((2, 1)), Array2::from_elem((2, 1), false));
        let w = LossWeights {
            l1: 0.5,
            l2: 0.25,
            ..Default::default()
        };
        let (b, g1, g2) = combined_loss(
            &[0.0, 0.0],
            Array2::from_elem((2, 1), 0.5).view(),
            &BatchTargets {
                times: &[1.0, 2.0],
                events: &[false, false],
                labels: &l,
            },
            &state.params,
            &w,
            None,
        )
        .unwrap();
        assert!(b.efron_skipped);
        assert_eq!(b.total, b.penalty);
        let expected: f64 = [&state.params.bottleneck.weight, &state.params.head.weight]
            .iter()
            .flat_map(|w| w.iter())
            .map(|v| 0.5 * v.abs() + 0.25 * v * v)
            .sum();
        assert!((b.penalty - expected).abs() < 1e-15);
        assert!(g1.iter().chain(g2.iter()).all(|&v| v == 0.0));
    }
}
