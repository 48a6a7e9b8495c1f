//! Right-censored survival data: domain types, time discretization, survival
//! label matrices, the Kaplan-Meier estimator and the censoring-aware ranking
//! metrics (concordance index and per-threshold AUROC).

mod km;
mod labels;
mod metrics;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

pub use km::{kaplan_meier, KmCurve};
pub use labels::{survival_labels, survival_labels_for, LabelMatrix};
pub use metrics::{
    admissible_pairs, auroc_series, censored_auroc_at, concordance_counts, concordance_index,
    ConcordanceCounts,
};

/// One subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub features: Vec<f64>,
    /// Event time when `event` is true, last follow-up otherwise.
    pub observed_time: f64,
    pub event: bool,
}

/// Events sharing one observed time.
#[derive(Debug, Clone, PartialEq)]
pub struct TieGroup {
    pub time: f64,
    pub members: Vec<usize>,
}

/// A feature matrix with observed times and event indicators.
///
/// `horizon` is the number of discrete time units covered by the survival
/// head; subsets keep the horizon of the dataset they came from so label
/// matrices stay aligned across splits.
#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    features: Array2<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
    feature_names: Vec<String>,
    unit_length: f64,
    horizon: usize,
    tie_groups: Vec<TieGroup>,
}

/// Bin index of an observed time: `floor(observed_time / unit_length)`.
pub fn discretize_time(observed_time: f64, unit_length: f64) -> Result<usize> {
    if !(unit_length > 0.0) || !unit_length.is_finite() {
        return Err(SurvError::invalid(format!(
            "unit length must be positive, got {unit_length}"
        )));
    }
    if !(observed_time >= 0.0) || !observed_time.is_finite() {
        return Err(SurvError::invalid(format!(
            "observed time must be finite and non-negative, got {observed_time}"
        )));
    }
    Ok((observed_time / unit_length).floor() as usize)
}

fn build_tie_groups(times: &[f64], events: &[bool]) -> Vec<TieGroup> {
    let mut groups: BTreeMap<u64, TieGroup> = BTreeMap::new();
    for (i, (&t, &e)) in times.iter().zip(events).enumerate() {
        if e {
            // Non-negative finite floats order the same as their bit patterns.
            groups
                .entry(t.to_bits())
                .or_insert_with(|| TieGroup {
                    time: t,
                    members: Vec::new(),
                })
                .members
                .push(i);
        }
    }
    groups.into_values().collect()
}

impl SurvivalDataset {
    /// Builds a dataset whose horizon covers every observed time.
    pub fn new(
        features: Array2<f64>,
        times: Vec<f64>,
        events: Vec<bool>,
        feature_names: Vec<String>,
        unit_length: f64,
    ) -> Result<Self> {
        let mut max_bin = 0;
        for &t in &times {
            max_bin = max_bin.max(discretize_time(t, unit_length)?);
        }
        Self::with_horizon(
            features,
            times,
            events,
            feature_names,
            unit_length,
            max_bin + 1,
        )
    }

    pub fn with_horizon(
        features: Array2<f64>,
        times: Vec<f64>,
        events: Vec<bool>,
        feature_names: Vec<String>,
        unit_length: f64,
        horizon: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if times.len() != n || events.len() != n {
            return Err(SurvError::invalid(format!(
                "{} feature rows but {} times and {} event flags",
                n,
                times.len(),
                events.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(SurvError::invalid(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if horizon == 0 {
            return Err(SurvError::invalid("horizon must be at least one time unit"));
        }
        for &t in &times {
            let bin = discretize_time(t, unit_length)?;
            if bin >= horizon {
                return Err(SurvError::invalid(format!(
                    "time {t} falls in bin {bin}, beyond horizon {horizon}"
                )));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SurvError::invalid("feature matrix contains non-finite values"));
        }
        let tie_groups = build_tie_groups(&times, &events);
        Ok(SurvivalDataset {
            features,
            times,
            events,
            feature_names,
            unit_length,
            horizon,
            tie_groups,
        })
    }

    pub fn from_records(
        records: &[SurvivalRecord],
        feature_names: Vec<String>,
        unit_length: f64,
    ) -> Result<Self> {
        let p = feature_names.len();
        let mut features = Array2::zeros((records.len(), p));
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != p {
                return Err(SurvError::invalid(format!(
                    "record {i} has {} features, expected {p}",
                    r.features.len()
                )));
            }
            for (j, &v) in r.features.iter().enumerate() {
                features[[i, j]] = v;
            }
        }
        Self::new(
            features,
            records.iter().map(|r| r.observed_time).collect(),
            records.iter().map(|r| r.event).collect(),
            feature_names,
            unit_length,
        )
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn unit_length(&self) -> f64 {
        self.unit_length
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Tie groups `H_j`, ordered by increasing event time.
    pub fn tie_groups(&self) -> &[TieGroup] {
        &self.tie_groups
    }

    pub fn unique_event_times(&self) -> Vec<f64> {
        self.tie_groups.iter().map(|g| g.time).collect()
    }

    /// Number of distinct observed times, censored or not.
    pub fn unique_time_count(&self) -> usize {
        let mut bits: Vec<u64> = self.times.iter().map(|t| t.to_bits()).collect();
        bits.sort_unstable();
        bits.dedup();
        bits.len()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        1.0 - self.n_events() as f64 / self.len() as f64
    }

    pub fn record(&self, i: usize) -> SurvivalRecord {
        SurvivalRecord {
            features: self.features.row(i).to_vec(),
            observed_time: self.times[i],
            event: self.events[i],
        }
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn bin(&self, i: usize) -> usize {
        // Validated at construction.
        (self.times[i] / self.unit_length).floor() as usize
    }

    pub fn bins(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.bin(i)).collect()
    }

    /// Rows selected by `indices`, in that order, keeping this dataset's horizon.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(SurvError::invalid(format!(
                "subset index {bad} out of range for {} records",
                self.len()
            )));
        }
        Self::with_horizon(
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| self.times[i]).collect(),
            indices.iter().map(|&i| self.events[i]).collect(),
            self.feature_names.clone(),
            self.unit_length,
            self.horizon,
        )
    }

    /// Same records with a replaced feature matrix (used by perturbation analyses).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(SurvError::invalid(format!(
                "replacement features have shape {:?}, expected {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        Ok(SurvivalDataset {
            features,
            ..self.clone()
        })
    }
}
