use ndarray::Array2;

use super::{discretize_time, SurvivalDataset};
use crate::error::{Result, SurvError};

/// Per-threshold survival targets for the survival head.
///
/// `labels[[i, t]]` is 1 when record `i` is known to survive past unit `t`
/// and 0 when its event happened at or before `t`. Entries with
/// `mask[[i, t]] == false` lie beyond a censoring time; their label value is
/// 0 and carries no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub labels: Array2<f64>,
    pub mask: Array2<bool>,
}

impl LabelMatrix {
    pub fn n_records(&self) -> usize {
        self.labels.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.labels.ncols()
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> LabelMatrix {
        LabelMatrix {
            labels: self.labels.select(ndarray::Axis(0), indices),
            mask: self.mask.select(ndarray::Axis(0), indices),
        }
    }

    /// Fraction of entries hidden by censoring.
    pub fn masked_fraction(&self) -> f64 {
        let hidden = self.mask.iter().filter(|&&m| !m).count();
        hidden as f64 / self.mask.len().max(1) as f64
    }
}

pub fn survival_labels(dataset: &SurvivalDataset) -> Result<LabelMatrix> {
    if dataset.is_empty() {
        return Err(SurvError::invalid("cannot label an empty dataset"));
    }
    survival_labels_for(
        dataset.times(),
        dataset.events(),
        dataset.unit_length(),
        dataset.horizon(),
    )
}

pub fn survival_labels_for(
    times: &[f64],
    events: &[bool],
    unit_length: f64,
    horizon: usize,
) -> Result<LabelMatrix> {
    if horizon == 0 {
        return Err(SurvError::invalid("horizon must be at least one time unit"));
    }
    if times.len() != events.len() {
        return Err(SurvError::invalid("times and events differ in length"));
    }
    let n = times.len();
    let mut labels = Array2::zeros((n, horizon));
    let mut mask = Array2::from_elem((n, horizon), false);
    for i in 0..n {
        let bin = discretize_time(times[i], unit_length)?;
        if bin >= horizon {
            return Err(SurvError::invalid(format!(
                "record {i} falls in bin {bin}, beyond horizon {horizon}"
            )));
        }
        for t in 0..horizon {
            if t < bin {
                labels[[i, t]] = 1.0;
                mask[[i, t]] = true;
            } else if events[i] {
                mask[[i, t]] = true;
            }
        }
    }
    Ok(LabelMatrix { labels, mask })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_and_censored_rows() {
        let lm = survival_labels_for(&[2.5, 2.0], &[true, false], 1.0, 4).unwrap();
        assert_eq!(lm.labels.row(0).to_vec(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(lm.mask.row(0).to_vec(), vec![true; 4]);
        assert_eq!(lm.labels.row(1).to_vec()[..2], [1.0, 1.0]);
        assert_eq!(lm.mask.row(1).to_vec(), vec![true, true, false, false]);
        assert_eq!(lm.masked_fraction(), 2.0 / 8.0);
    }

    #[test]
    fn no_censoring_means_full_mask() {
        let lm = survival_labels_for(&[0.0, 1.0, 3.0], &[true; 3], 1.0, 4).unwrap();
        assert!(lm.mask.iter().all(|&m| m));
    }

    #[test]
    fn zero_horizon_rejected() {
        assert!(survival_labels_for(&[0.0], &[true], 1.0, 0).is_err());
        assert!(survival_labels_for(&[5.0], &[true], 1.0, 3).is_err());
    }
}
