use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};
use crate::survival::{discretize_time, SurvivalDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    /// 80/20 train/test with a validation set of 20% carved from training.
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.as_array();
        if f.iter().any(|v| !(*v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SurvError::invalid(format!(
                "split fractions must be positive and sum to 1, got {f:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// Strata too small to feed every split, merged into a neighbouring bin.
    pub merged_cells: Vec<String>,
}

impl SplitIndices {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.validation, &self.test]
    }

    /// Training plus validation rows, sorted.
    pub fn train_and_validation(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Splits records into train/validation/test, stratified by event status and
/// discretized time bin.
///
/// Records are laid out stratum by stratum (censored strata first, bins
/// ascending, shuffled within each stratum by `seed`) and dealt to the splits
/// in a fixed sequence where each position goes to the split furthest below
/// its quota. Every prefix of the layout, and so every stratum and the
/// overall censored share, stays within one or two records of proportional.
pub fn stratified_split(
    times: &[f64],
    events: &[bool],
    unit_length: f64,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitIndices> {
    fractions.validate()?;
    if times.len() != events.len() {
        return Err(SurvError::invalid("times and events differ in length"));
    }
    let mut strata: BTreeMap<(bool, usize), Vec<usize>> = BTreeMap::new();
    for (i, (&t, &e)) in times.iter().zip(events).enumerate() {
        strata
            .entry((e, discretize_time(t, unit_length)?))
            .or_default()
            .push(i);
    }

    const N_SPLITS: usize = 3;
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut merged_cells = Vec::new();
    for event in [false, true] {
        let mut group: Vec<(usize, Vec<usize>)> = Vec::new();
        for (&(e, bin), members) in &strata {
            if e != event {
                continue;
            }
            match group.last_mut() {
                Some((prev_bin, prev)) if members.len() < N_SPLITS => {
                    merged_cells.push(format!(
                        "event={} bin {bin} ({} records) merged into bin {prev_bin}",
                        u8::from(event),
                        members.len()
                    ));
                    prev.extend(members);
                }
                _ => group.push((bin, members.clone())),
            }
        }
        if group.len() > 1 && group[0].1.len() < N_SPLITS {
            let (bin, first) = group.remove(0);
            merged_cells.push(format!(
                "event={} bin {bin} ({} records) merged into bin {}",
                u8::from(event),
                first.len(),
                group[0].0
            ));
            group[0].1.extend(first);
        }
        cells.extend(group.into_iter().map(|(_, mut m)| {
            m.sort_unstable();
            m
        }));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layout = Vec::with_capacity(times.len());
    for mut cell in cells {
        cell.shuffle(&mut rng);
        layout.extend(cell);
    }

    let quota = fractions.as_array();
    let mut parts: [Vec<usize>; N_SPLITS] = Default::default();
    for (k, &record) in layout.iter().enumerate() {
        let position = (k + 1) as f64;
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for (s, f) in quota.iter().enumerate() {
            let deficit = f * position - parts[s].len() as f64;
            if deficit > best_deficit + 1e-12 {
                best = s;
                best_deficit = deficit;
            }
        }
        parts[best].push(record);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    let [train, validation, test] = parts;
    Ok(SplitIndices {
        train,
        validation,
        test,
        seed,
        merged_cells,
    })
}

pub fn stratified_split_dataset(
    dataset: &SurvivalDataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitIndices> {
    stratified_split(
        dataset.times(),
        dataset.events(),
        dataset.unit_length(),
        fractions,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn covers_once(split: &SplitIndices, n: usize) -> bool {
        let mut all: Vec<usize> = split.parts().iter().flat_map(|p| p.iter().copied()).collect();
        all.sort_unstable();
        all == (0..n).collect::<Vec<_>>()
    }

    #[test]
    fn eight_uniform_records() {
        let times: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let events = vec![true; 8];
        let f = SplitFractions {
            train: 0.5,
            validation: 0.25,
            test: 0.25,
        };
        let s = stratified_split(&times, &events, 100.0, f, 1).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (4, 2, 2)
        );
        assert!(covers_once(&s, 8));
    }

    #[test]
    fn censored_share_preserved() {
        let times: Vec<f64> = (0..100).map(|i| (i % 10) as f64).collect();
        let events: Vec<bool> = (0..100).map(|i| i % 20 >= 13).collect();
        let censored = events.iter().filter(|e| !**e).count();
        assert_eq!(censored, 65);
        let s = stratified_split(&times, &events, 1.0, SplitFractions::default(), 9).unwrap();
        assert!(covers_once(&s, 100));
        for part in s.parts() {
            let c = part.iter().filter(|&&i| !events[i]).count() as f64;
            let expected = 0.65 * part.len() as f64;
            assert!((c - expected).abs() <= 1.0, "{c} vs {expected}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let times: Vec<f64> = (0..60).map(|i| (i % 7) as f64 * 1.5).collect();
        let events: Vec<bool> = (0..60).map(|i| i % 3 != 0).collect();
        let a = stratified_split(&times, &events, 1.0, SplitFractions::default(), 4).unwrap();
        let b = stratified_split(&times, &events, 1.0, SplitFractions::default(), 4).unwrap();
        let c = stratified_split(&times, &events, 1.0, SplitFractions::default(), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, c.train);
        assert_eq!(a.train.len(), c.train.len());
    }

    #[test]
    fn tiny_strata_are_merged() {
        let times = vec![0.0, 0.1, 0.2, 0.3, 5.0];
        let events = vec![true; 5];
        let s = stratified_split(&times, &events, 1.0, SplitFractions::default(), 0).unwrap();
        assert_eq!(s.merged_cells.len(), 1);
        assert!(covers_once(&s, 5));
    }

    #[test]
    fn bad_fractions_rejected() {
        let f = SplitFractions {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(stratified_split(&[1.0], &[true], 1.0, f, 0).is_err());
    }
}
