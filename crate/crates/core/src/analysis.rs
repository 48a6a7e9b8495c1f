//! Post-hoc interpretation: perturbation variable importance, mean survival
//! curves per stratum of a feature, and median survival.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::EncodedKind;
use crate::error::{Result, SurvError};
use crate::survival::{concordance_index, SurvivalDataset};

/// Population standard deviation.
pub fn column_std(column: &[f64]) -> f64 {
    if column.is_empty() {
        return 0.0;
    }
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Adds independent `N(0, (σ·ε)²)` noise to every entry.
pub fn perturb_continuous<R: Rng + ?Sized>(
    column: &[f64],
    sigma: f64,
    epsilon: f64,
    rng: &mut R,
) -> Vec<f64> {
    let sd = sigma * epsilon;
    if !(sd > 0.0) || !sd.is_finite() {
        return column.to_vec();
    }
    let noise = Normal::new(0.0, sd).expect("positive finite sd");
    column.iter().map(|&v| v + noise.sample(rng)).collect()
}

/// Flips each 0/1 entry independently with probability `flip_prob`.
pub fn perturb_discrete<R: Rng + ?Sized>(
    column: &[f64],
    flip_prob: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(SurvError::invalid(format!("flip probability {flip_prob} outside [0, 1]")));
    }
    column
        .iter()
        .map(|&v| {
            if v != 0.0 && v != 1.0 {
                return Err(SurvError::invalid(format!("non-binary entry {v}")));
            }
            let flip = rng.random_bool(flip_prob);
            Ok(if flip { 1.0 - v } else { v })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VimpConfig {
    pub epsilon: f64,
    pub flip_prob: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for VimpConfig {
    fn default() -> Self {
        VimpConfig {
            epsilon: 0.1,
            flip_prob: 0.1,
            repetitions: 10,
            seed: 0,
        }
    }
}

impl VimpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(SurvError::invalid("epsilon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(SurvError::invalid("flip_prob must lie in [0, 1]"));
        }
        if self.repetitions == 0 {
            return Err(SurvError::invalid("repetitions must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimpEntry {
    pub feature: String,
    pub baseline_error: f64,
    /// Mean perturbed error over the repetitions.
    pub perturbed_error: f64,
    /// `perturbed_error − baseline_error`.
    pub vimp: f64,
    /// Sample standard deviation of the per-repetition differences.
    pub vimp_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimpReport {
    pub entries: Vec<VimpEntry>,
    pub epsilon: f64,
    pub flip_prob: f64,
    pub seed: u64,
    pub repetitions: usize,
}

impl VimpReport {
    pub fn sort_descending(&mut self) {
        self.entries
            .sort_by(|a, b| b.vimp.total_cmp(&a.vimp).then_with(|| a.feature.cmp(&b.feature)));
    }
}

fn prediction_error<P>(predictor: &P, x: ArrayView2<'_, f64>, ds: &SurvivalDataset) -> Result<f64>
where
    P: Fn(ArrayView2<'_, f64>) -> Result<Vec<f64>> + ?Sized,
{
    let scores = predictor(x)?;
    Ok(1.0 - concordance_index(ds.times(), ds.events(), &scores)?)
}

fn noise_rng(seed: u64, feature: usize, repetition: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((feature as u64) << 32) | repetition as u64);
    rng
}

/// Importance of one feature: the increase in `1 − C-index` of a fixed
/// risk predictor when that feature is perturbed.
pub fn vimp<P>(
    predictor: &P,
    dataset: &SurvivalDataset,
    kinds: &[EncodedKind],
    feature: &str,
    config: &VimpConfig,
) -> Result<VimpEntry>
where
    P: Fn(ArrayView2<'_, f64>) -> Result<Vec<f64>> + ?Sized,
{
    config.validate()?;
    let j = dataset
        .feature_names()
        .iter()
        .position(|f| f == feature)
        .ok_or_else(|| SurvError::invalid(format!("unknown feature '{feature}'")))?;
    if kinds.len() != dataset.n_features() {
        return Err(SurvError::invalid("one feature kind per column required"));
    }
    let baseline = prediction_error(predictor, dataset.features().view(), dataset)?;
    let column: Vec<f64> = dataset.features().column(j).to_vec();
    let sigma = column_std(&column);
    let mut diffs = Vec::with_capacity(config.repetitions);
    let mut x: Array2<f64> = dataset.features().clone();
    for rep in 0..config.repetitions {
        let mut rng = noise_rng(config.seed, j, rep);
        let noisy = match kinds[j] {
            EncodedKind::Continuous => perturb_continuous(&column, sigma, config.epsilon, &mut rng),
            EncodedKind::Indicator => perturb_discrete(&column, config.flip_prob, &mut rng)?,
        };
        x.column_mut(j).assign(&ndarray::Array1::from(noisy));
        diffs.push(prediction_error(predictor, x.view(), dataset)? - baseline);
    }
    let r = diffs.len() as f64;
    let mean_diff = diffs.iter().sum::<f64>() / r;
    // Averaging differences keeps an untouched prediction at exactly zero.
    let perturbed = baseline + mean_diff;
    let vimp = perturbed - baseline;
    let sd = if diffs.len() > 1 {
        (diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(VimpEntry {
        feature: feature.to_string(),
        baseline_error: baseline,
        perturbed_error: perturbed,
        vimp,
        vimp_sd: sd,
    })
}

/// VIMP of every feature, computed in parallel when enabled; entries are
/// sorted by decreasing importance.
pub fn vimp_all<P>(
    predictor: &P,
    dataset: &SurvivalDataset,
    kinds: &[EncodedKind],
    config: &VimpConfig,
) -> Result<VimpReport>
where
    P: Fn(ArrayView2<'_, f64>) -> Result<Vec<f64>> + Sync + ?Sized,
{
    let names = dataset.feature_names();
    let one = |name: &String| vimp(predictor, dataset, kinds, name, config);
    #[cfg(feature = "parallel")]
    let entries: Result<Vec<VimpEntry>> = {
        use rayon::prelude::*;
        names.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let entries: Result<Vec<VimpEntry>> = names.iter().map(one).collect();
    let mut report = VimpReport {
        entries: entries?,
        epsilon: config.epsilon,
        flip_prob: config.flip_prob,
        seed: config.seed,
        repetitions: config.repetitions,
    };
    report.sort_descending();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCurve {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Componentwise mean of the members' survival vectors; `None` when empty.
    pub mean: Option<Vec<f64>>,
}

/// Mean predicted survival curve per stratum `[edge_k, edge_{k+1})` of
/// `feature` (the last stratum includes its upper edge).
pub fn strata_curves<P>(
    predictor: &P,
    dataset: &SurvivalDataset,
    feature: &str,
    bin_edges: &[f64],
) -> Result<Vec<StratumCurve>>
where
    P: Fn(ArrayView2<'_, f64>) -> Result<Array2<f64>> + ?Sized,
{
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SurvError::invalid("bin edges must be strictly increasing, at least two"));
    }
    let j = dataset
        .feature_names()
        .iter()
        .position(|f| f == feature)
        .ok_or_else(|| SurvError::invalid(format!("unknown feature '{feature}'")))?;
    let s2 = predictor(dataset.features().view())?;
    if s2.nrows() != dataset.len() {
        return Err(SurvError::invalid("predictor returned the wrong number of rows"));
    }
    let last = bin_edges.len() - 2;
    let mut out = Vec::new();
    for k in 0..=last {
        let (lo, hi) = (bin_edges[k], bin_edges[k + 1]);
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| {
                let v = dataset.features()[[i, j]];
                v >= lo && (v < hi || (k == last && v == hi))
            })
            .collect();
        let mean = (!members.is_empty()).then(|| {
            let mut acc = vec![0.0; s2.ncols()];
            for &i in &members {
                for (a, v) in acc.iter_mut().zip(s2.row(i)) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / members.len() as f64).collect()
        });
        out.push(StratumCurve {
            lower: lo,
            upper: hi,
            count: members.len(),
            mean,
        });
    }
    Ok(out)
}

/// First time unit where the survival curve drops below one half.
pub fn median_survival(s2: &[f64]) -> Option<usize> {
    s2.iter().position(|&s| s < 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn median_examples() {
        assert_eq!(median_survival(&[0.9, 0.6, 0.4, 0.2]), Some(2));
        assert_eq!(median_survival(&[0.9, 0.5, 0.5]), None);
        assert_eq!(median_survival(&[0.4, 0.3]), Some(0));
    }

    #[test]
    fn constant_column_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = vec![2.0; 10];
        assert_eq!(perturb_continuous(&c, column_std(&c), 0.1, &mut rng), c);
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(perturb_continuous(&x, 1.0, 0.0, &mut rng), x);
    }

    #[test]
    fn flip_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = vec![0.0, 1.0, 1.0, 0.0];
        assert_eq!(perturb_discrete(&c, 0.0, &mut rng).unwrap(), c);
        assert_eq!(perturb_discrete(&c, 1.0, &mut rng).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
        assert!(perturb_discrete(&[0.5], 0.1, &mut rng).is_err());
    }

    #[test]
    fn perturbation_concentration() {
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col: Vec<f64> = (0..n).map(|i| (i % 97) as f64).collect();
        let sigma = column_std(&col);
        let noisy = perturb_continuous(&col, sigma, 0.1, &mut rng);
        let shift = (noisy.iter().sum::<f64>() - col.iter().sum::<f64>()) / n as f64;
        assert!(shift.abs() <= 4.0 * sigma * 0.1 / (n as f64).sqrt());

        let bits: Vec<f64> = (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let flipped = perturb_discrete(&bits, 0.1, &mut rng).unwrap();
        let frac = bits.iter().zip(&flipped).filter(|(a, b)| a != b).count() as f64 / n as f64;
        assert!((frac - 0.1).abs() <= 4.0 * (0.1f64 * 0.9 / n as f64).sqrt());
    }

    fn toy() -> SurvivalDataset {
        let x = array![[0.1, 1.0], [0.5, 0.0], [0.9, 1.0], [0.3, 0.0], [0.7, 1.0]];
        SurvivalDataset::new(
            x,
            vec![5.0, 3.0, 1.0, 4.0, 2.0],
            vec![true; 5],
            vec!["age".into(), "sex".into()],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn strata_weighted_mean_is_overall_mean() {
        let ds = toy();
        let pred = |x: ArrayView2<'_, f64>| -> Result<Array2<f64>> {
            Ok(Array2::from_shape_fn((x.nrows(), 3), |(i, t)| x[[i, 0]] / (t + 1) as f64))
        };
        let strata = strata_curves(&pred, &ds, "age", &[0.0, 0.4, 1.0]).unwrap();
        let all = strata_curves(&pred, &ds, "age", &[0.0, 1.0]).unwrap();
        let overall = all[0].mean.as_ref().unwrap();
        for t in 0..3 {
            let w: f64 = strata
                .iter()
                .map(|s| s.count as f64 * s.mean.as_ref().unwrap()[t])
                .sum::<f64>()
                / 5.0;
            assert!((w - overall[t]).abs() < 1e-15);
        }
        let empty = strata_curves(&pred, &ds, "age", &[0.0, 0.05, 1.0]).unwrap();
        assert_eq!(empty[0].mean, None);
    }

    #[test]
    fn unused_feature_has_zero_vimp() {
        let ds = toy();
        let pred = |x: ArrayView2<'_, f64>| -> Result<Vec<f64>> {
            Ok(x.rows().into_iter().map(|r| r[0] * 2.0 + r[1] * 0.0).collect())
        };
        let kinds = [EncodedKind::Continuous, EncodedKind::Indicator];
        let cfg = VimpConfig::default();
        let e = vimp(&pred, &ds, &kinds, "sex", &cfg).unwrap();
        assert_eq!(e.vimp, 0.0);
        let report = vimp_all(&pred, &ds, &kinds, &cfg).unwrap();
        assert_eq!(report, vimp_all(&pred, &ds, &kinds, &cfg).unwrap());
        assert!(report.entries.windows(2).all(|w| w[0].vimp >= w[1].vimp));
    }
}
