use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

/// Product-limit survival estimate, one entry per distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KmCurve {
    /// Step-function value at `t` (right-continuous; 1 before the first event).
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&ti| ti <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// Recomputes every step from the stored counts and compares bit-for-bit.
    pub fn satisfies_recurrence(&self) -> bool {
        let mut prev = 1.0_f64;
        for i in 0..self.times.len() {
            let expected = prev * (1.0 - self.events[i] as f64 / self.at_risk[i] as f64);
            if expected.to_bits() != self.survival[i].to_bits() {
                return false;
            }
            prev = expected;
        }
        true
    }
}

/// Kaplan-Meier estimator. Subjects censored at an event time stay in that
/// time's risk set.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    if times.is_empty() {
        return Err(SurvError::invalid("Kaplan-Meier needs at least one record"));
    }
    if times.len() != events.len() {
        return Err(SurvError::invalid(format!(
            "{} times but {} event flags",
            times.len(),
            events.len()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(SurvError::invalid("non-finite observed time"));
    }

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut at_risk = times.len();
    let mut s = 1.0_f64;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let mut d = 0;
        while j < order.len() && times[order[j]] == t {
            if events[order[j]] {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_subject_example() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, false]).unwrap();
        assert_eq!(km.times, vec![1.0, 3.0]);
        assert_eq!(km.survival, vec![0.75, 0.375]);
        assert_eq!(km.at_risk, vec![4, 2]);
        assert_eq!(km.events, vec![1, 1]);
        assert!(km.satisfies_recurrence());
    }

    #[test]
    fn all_censored_is_flat() {
        let km = kaplan_meier(&[1.0, 2.0], &[false, false]).unwrap();
        assert!(km.times.is_empty());
        assert_eq!(km.survival_at(10.0), 1.0);
    }

    #[test]
    fn single_event_then_censoring() {
        let n = 7;
        let times: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let mut events = vec![false; n];
        events[0] = true;
        let km = kaplan_meier(&times, &events).unwrap();
        assert_eq!(km.survival, vec![1.0 - 1.0 / n as f64]);
    }

    #[test]
    fn censoring_tied_with_event_stays_at_risk() {
        // Event and censoring both at t=2: n at t=2 counts both.
        let km = kaplan_meier(&[1.0, 2.0, 2.0, 3.0], &[false, true, false, true]).unwrap();
        assert_eq!(km.at_risk, vec![3, 1]);
        assert_eq!(km.survival[0], 1.0 - 1.0 / 3.0);
        assert_eq!(km.survival_at(2.5), km.survival[0]);
        assert_eq!(km.survival_at(0.5), 1.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(kaplan_meier(&[], &[]).is_err());
    }
}
