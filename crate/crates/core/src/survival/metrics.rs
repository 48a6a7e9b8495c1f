use ndarray::ArrayView2;

use super::LabelMatrix;
use crate::error::{Result, SurvError};

/// Ordered pairs `(earlier, later)` whose event order is known despite censoring.
///
/// The earlier record must have an observed event. Two records sharing a
/// time form a pair only when exactly one of them is an event; the censored
/// one is known to have outlived that time. Two events at the same time
/// cannot be ordered.
pub fn admissible_pairs(times: &[f64], events: &[bool]) -> Vec<(usize, usize)> {
    let n = times.len().min(events.len());
    let mut pairs = Vec::new();
    for i in 0..n {
        if !events[i] {
            continue;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            if times[i] < times[j] || (times[i] == times[j] && !events[j]) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Pair counts behind a concordance index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConcordanceCounts {
    pub concordant: u64,
    pub tied: u64,
    pub discordant: u64,
}

impl ConcordanceCounts {
    pub fn admissible(&self) -> u64 {
        self.concordant + self.tied + self.discordant
    }

    pub fn index(&self) -> Result<f64> {
        let total = self.admissible();
        if total == 0 {
            return Err(SurvError::UndefinedMetric(
                "no admissible pairs for the concordance index".into(),
            ));
        }
        Ok((self.concordant as f64 + 0.5 * self.tied as f64) / total as f64)
    }
}

/// Fenwick tree over score ranks.
struct RankCounter {
    tree: Vec<u64>,
    total: u64,
}

impl RankCounter {
    fn new(n: usize) -> Self {
        RankCounter {
            tree: vec![0; n + 1],
            total: 0,
        }
    }

    fn insert(&mut self, rank: usize) {
        self.total += 1;
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut acc = 0;
        while i > 0 {
            acc += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }
}

fn check_lengths(times: &[f64], events: &[bool], scores: &[f64]) -> Result<()> {
    if times.len() != events.len() || times.len() != scores.len() {
        return Err(SurvError::invalid(format!(
            "lengths differ: {} times, {} events, {} scores",
            times.len(),
            events.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) || times.iter().any(|t| t.is_nan()) {
        return Err(SurvError::invalid("NaN in times or scores"));
    }
    Ok(())
}

/// Counts concordant, tied and discordant admissible pairs in O(n log n).
///
/// A pair is concordant when the record with the earlier event carries the
/// higher risk score.
pub fn concordance_counts(
    times: &[f64],
    events: &[bool],
    risk_scores: &[f64],
) -> Result<ConcordanceCounts> {
    check_lengths(times, events, risk_scores)?;
    let n = times.len();

    // Dense ranks of the scores, equal scores share a rank.
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| risk_scores[a].total_cmp(&risk_scores[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for k in 0..n {
        if k > 0 && risk_scores[by_score[k]] != risk_scores[by_score[k - 1]] {
            r += 1;
        }
        rank[by_score[k]] = r;
    }

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut later = RankCounter::new(r + 1);
    let mut counts = ConcordanceCounts::default();
    let mut start = 0;
    while start < n {
        let t = times[by_time[start]];
        let mut end = start;
        while end < n && times[by_time[end]] == t {
            end += 1;
        }
        let group = &by_time[start..end];
        // Censored records at this time outlive the events at this time.
        for &i in group.iter().filter(|&&i| !events[i]) {
            later.insert(rank[i]);
        }
        for &i in group.iter().filter(|&&i| events[i]) {
            let below = later.below(rank[i]);
            let at_or_below = later.below(rank[i] + 1);
            counts.concordant += below;
            counts.tied += at_or_below - below;
            counts.discordant += later.total - at_or_below;
        }
        for &i in group.iter().filter(|&&i| events[i]) {
            later.insert(rank[i]);
        }
        start = end;
    }
    Ok(counts)
}

/// Harrell's concordance index; tied risk scores earn half credit.
pub fn concordance_index(times: &[f64], events: &[bool], risk_scores: &[f64]) -> Result<f64> {
    concordance_counts(times, events, risk_scores)?.index()
}

/// Censoring-aware AUROC at one threshold.
///
/// Positives are records known to survive past `threshold_bin`, negatives
/// those whose event happened by then; hidden labels are skipped. Returns the
/// probability that a positive scores above a negative, ties counting half.
pub fn censored_auroc_at(
    threshold_bin: usize,
    labels: &LabelMatrix,
    scores_at_t: &[f64],
) -> Result<f64> {
    if threshold_bin >= labels.horizon() {
        return Err(SurvError::invalid(format!(
            "threshold {threshold_bin} outside horizon {}",
            labels.horizon()
        )));
    }
    if scores_at_t.len() != labels.n_records() {
        return Err(SurvError::invalid(format!(
            "{} scores for {} labelled records",
            scores_at_t.len(),
            labels.n_records()
        )));
    }
    if scores_at_t.iter().any(|s| s.is_nan()) {
        return Err(SurvError::invalid("NaN score"));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (i, &s) in scores_at_t.iter().enumerate() {
        if !labels.mask[[i, threshold_bin]] {
            continue;
        }
        if labels.labels[[i, threshold_bin]] > 0.5 {
            positives.push(s);
        } else {
            negatives.push(s);
        }
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(SurvError::UndefinedMetric(format!(
            "threshold {threshold_bin} has {} positives and {} negatives",
            positives.len(),
            negatives.len()
        )));
    }
    negatives.sort_by(f64::total_cmp);
    let mut wins = 0u64;
    let mut ties = 0u64;
    for &p in &positives {
        let below = negatives.partition_point(|&v| v < p) as u64;
        let at_or_below = negatives.partition_point(|&v| v <= p) as u64;
        wins += below;
        ties += at_or_below - below;
    }
    let total = positives.len() as u64 * negatives.len() as u64;
    Ok((wins as f64 + 0.5 * ties as f64) / total as f64)
}

/// AUROC at every threshold; `None` marks thresholds without both classes.
///
/// `scores` is records × horizon, higher meaning more likely to survive.
pub fn auroc_series(labels: &LabelMatrix, scores: ArrayView2<'_, f64>) -> Result<Vec<Option<f64>>> {
    if scores.dim() != labels.labels.dim() {
        return Err(SurvError::invalid(format!(
            "score matrix {:?} does not match labels {:?}",
            scores.dim(),
            labels.labels.dim()
        )));
    }
    (0..labels.horizon())
        .map(|t| {
            let col: Vec<f64> = scores.column(t).to_vec();
            match censored_auroc_at(t, labels, &col) {
                Ok(v) => Ok(Some(v)),
                Err(SurvError::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::survival_labels_for;

    #[test]
    fn admissibility_rules() {
        assert!(admissible_pairs(&[1.0, 2.0], &[false, false]).is_empty());
        assert!(admissible_pairs(&[1.0, 2.0], &[false, true]).is_empty());
        assert_eq!(admissible_pairs(&[1.0, 2.0], &[true, false]), vec![(0, 1)]);
        assert!(admissible_pairs(&[1.0, 1.0], &[true, true]).is_empty());
        assert_eq!(admissible_pairs(&[1.0, 1.0], &[false, true]), vec![(1, 0)]);
    }

    #[test]
    fn cindex_examples() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let e = [true; 4];
        assert_eq!(concordance_index(&t, &e, &[4.0, 3.0, 2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(concordance_index(&t, &e, &[1.0; 4]).unwrap(), 0.5);
        let c = concordance_index(&[1.0, 2.0, 3.0], &[true, true, false], &[3.0, 1.0, 2.0])
            .unwrap();
        assert_eq!(c, 2.0 / 3.0);
    }

    #[test]
    fn cindex_without_pairs_is_undefined() {
        let err = concordance_index(&[1.0, 2.0], &[false, false], &[0.0, 1.0]);
        assert!(matches!(err, Err(SurvError::UndefinedMetric(_))));
    }

    #[test]
    fn auroc_examples() {
        // Bin 0: two survivors and one event.
        let lm = survival_labels_for(&[5.0, 5.0, 0.5], &[true, true, true], 1.0, 6).unwrap();
        assert_eq!(censored_auroc_at(0, &lm, &[0.9, 0.4, 0.6]).unwrap(), 0.5);
        assert_eq!(censored_auroc_at(0, &lm, &[0.9, 0.8, 0.1]).unwrap(), 1.0);
        assert_eq!(censored_auroc_at(0, &lm, &[0.3; 3]).unwrap(), 0.5);
        // Bin 5: nobody left as a positive.
        assert!(matches!(
            censored_auroc_at(5, &lm, &[0.3; 3]),
            Err(SurvError::UndefinedMetric(_))
        ));
        assert!(censored_auroc_at(6, &lm, &[0.3; 3]).is_err());
    }

    #[test]
    fn series_reports_gaps() {
        let lm = survival_labels_for(&[2.5, 0.5], &[true, false], 1.0, 3).unwrap();
        let scores = ndarray::array![[0.9, 0.8, 0.7], [0.1, 0.1, 0.1]];
        let series = auroc_series(&lm, scores.view()).unwrap();
        assert_eq!(series, vec![None, None, None]);
    }
}
