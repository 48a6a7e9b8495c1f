//! Negative Cox partial log-likelihood with Efron's tie correction, written
//! over log-scores `eta_i = log s_i` so that both the linear Cox model
//! (`eta = θ·x`) and the network bottleneck can share it.
//!
//! For each distinct event time `t_j` with tied events `H_j` (`m = |H_j|`):
//!
//! ```text
//! -Σ_{i∈H_j} eta_i + Σ_{l=0}^{m-1} log( Σ_{Y_i ≥ t_j} s_i − (l/m) Σ_{i∈H_j} s_i )
//! ```
//!
//! Scores are shifted by `max(eta)` before exponentiation.

use crate::error::{Result, SurvError};

/// Records grouped by distinct observed time, latest time first.
#[derive(Debug, Clone)]
pub struct RiskSetIndex {
    /// `(start, end)` ranges into `order`, one per distinct time, descending.
    groups: Vec<(usize, usize)>,
    order: Vec<usize>,
    n_events: usize,
}

impl RiskSetIndex {
    pub fn new(times: &[f64], events: &[bool]) -> Result<Self> {
        if times.len() != events.len() {
            return Err(SurvError::invalid(format!(
                "{} times but {} event flags",
                times.len(),
                events.len()
            )));
        }
        if times.iter().any(|t| t.is_nan()) {
            return Err(SurvError::invalid("NaN observed time"));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        // Within a time, events come first so each group's events are contiguous.
        order.sort_by(|&a, &b| {
            times[b]
                .total_cmp(&times[a])
                .then_with(|| events[b].cmp(&events[a]))
        });
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = times[order[start]];
            let mut end = start;
            while end < order.len() && times[order[end]] == t {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }
        Ok(RiskSetIndex {
            groups,
            order,
            n_events: events.iter().filter(|&&e| e).count(),
        })
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    /// Iterates `(members_at_time, event_members)` from the latest time backwards.
    pub(crate) fn groups_descending<'a>(
        &'a self,
        events: &'a [bool],
    ) -> impl Iterator<Item = (&'a [usize], &'a [usize])> + 'a {
        self.groups.iter().map(move |&(s, e)| {
            let members = &self.order[s..e];
            let n_ev = members.iter().take_while(|&&i| events[i]).count();
            (members, &members[..n_ev])
        })
    }
}

/// Efron negative log partial likelihood and its gradient with respect to
/// each log-score. Returns `None` when there are no events.
pub fn efron_nll_log_scores(
    log_scores: &[f64],
    times: &[f64],
    events: &[bool],
) -> Result<Option<(f64, Vec<f64>)>> {
    if log_scores.len() != times.len() {
        return Err(SurvError::invalid(format!(
            "{} scores for {} records",
            log_scores.len(),
            times.len()
        )));
    }
    let index = RiskSetIndex::new(times, events)?;
    efron_with_index(&index, log_scores, events)
}

pub(crate) fn efron_with_index(
    index: &RiskSetIndex,
    log_scores: &[f64],
    events: &[bool],
) -> Result<Option<(f64, Vec<f64>)>> {
    if index.n_events() == 0 {
        return Ok(None);
    }
    if log_scores.iter().any(|v| !v.is_finite()) {
        return Err(SurvError::numeric("non-finite log-score in partial likelihood"));
    }
    let n = log_scores.len();
    let shift = log_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_scores.iter().map(|&v| (v - shift).exp()).collect();

    // Per distinct time (descending): Σ_l 1/D_l and Σ_l (l/m)/D_l.
    let n_groups = index.groups.len();
    let mut inv_sum = vec![0.0; n_groups];
    let mut frac_sum = vec![0.0; n_groups];
    let mut nll = 0.0;
    let mut risk = 0.0;
    for (g, (members, tied)) in index.groups_descending(events).enumerate() {
        risk += members.iter().map(|&i| w[i]).sum::<f64>();
        if tied.is_empty() {
            continue;
        }
        let m = tied.len() as f64;
        let tied_sum: f64 = tied.iter().map(|&i| w[i]).sum();
        nll -= tied.iter().map(|&i| log_scores[i]).sum::<f64>();
        for l in 0..tied.len() {
            let frac = l as f64 / m;
            let denom = risk - frac * tied_sum;
            if !(denom > 0.0) {
                return Err(SurvError::numeric(
                    "risk-set sum underflowed; log-scores span too wide a range",
                ));
            }
            nll += denom.ln() + shift;
            inv_sum[g] += 1.0 / denom;
            frac_sum[g] += frac / denom;
        }
    }
    if !nll.is_finite() {
        return Err(SurvError::numeric("partial likelihood overflowed"));
    }

    // A record at time Y_k sits in the risk set of every event time t_j ≤ Y_k:
    // accumulate inv_sum from the earliest time upwards.
    let mut grad = vec![0.0; n];
    let mut cumulative = 0.0;
    let groups: Vec<_> = index.groups_descending(events).collect();
    for g in (0..n_groups).rev() {
        cumulative += inv_sum[g];
        let (members, tied) = groups[g];
        for &k in members {
            grad[k] = w[k] * cumulative;
        }
        for &k in tied {
            grad[k] -= w[k] * frac_sum[g] + 1.0;
        }
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(SurvError::numeric("partial likelihood gradient overflowed"));
    }
    Ok(Some((nll, grad)))
}
