use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::table::{ColumnValues, RawTable};
use crate::error::{Result, SurvError};

/// Removes feature columns whose missing fraction strictly exceeds `threshold`.
pub fn drop_sparse_features(mut table: RawTable, threshold: f64) -> Result<RawTable> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SurvError::invalid(format!(
            "missingness threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let n = table.n_rows().max(1) as f64;
    let (keep, drop): (Vec<_>, Vec<_>) = table
        .columns
        .into_iter()
        .partition(|c| c.values.missing_count() as f64 / n <= threshold);
    table.dropped.extend(drop.into_iter().map(|c| c.name));
    table.columns = keep;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FillValue {
    Continuous { median: f64 },
    Categorical { mode: String },
}

/// Per-column fill values, computed on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub columns: Vec<(String, FillValue)>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl ImputeStats {
    pub fn fit(table: &RawTable, rows: &[usize]) -> Result<Self> {
        let mut columns = Vec::with_capacity(table.columns.len());
        for col in &table.columns {
            let fill = match &col.values {
                ColumnValues::Continuous(v) => {
                    let mut seen: Vec<f64> = rows.iter().filter_map(|&r| v[r]).collect();
                    if seen.is_empty() {
                        return Err(SurvError::invalid(format!(
                            "column '{}' has no observed values to impute from",
                            col.name
                        )));
                    }
                    FillValue::Continuous {
                        median: median(&mut seen),
                    }
                }
                ColumnValues::Categorical(v) => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for &r in rows {
                        if let Some(level) = &v[r] {
                            *counts.entry(level.as_str()).or_default() += 1;
                        }
                    }
                    // Most frequent level; ties go to the lexicographically smallest.
                    let mode = counts
                        .iter()
                        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                        .map(|(level, _)| level.to_string())
                        .ok_or_else(|| {
                            SurvError::invalid(format!(
                                "column '{}' has no observed values to impute from",
                                col.name
                            ))
                        })?;
                    FillValue::Categorical { mode }
                }
            };
            columns.push((col.name.clone(), fill));
        }
        Ok(ImputeStats { columns })
    }
}

/// Fills missing cells from `stats`.
pub fn impute(mut table: RawTable, stats: &ImputeStats) -> Result<RawTable> {
    for col in &mut table.columns {
        let fill = stats
            .columns
            .iter()
            .find(|(name, _)| *name == col.name)
            .map(|(_, f)| f)
            .ok_or_else(|| SurvError::invalid(format!("no imputation statistic for '{}'", col.name)))?;
        match (&mut col.values, fill) {
            (ColumnValues::Continuous(v), FillValue::Continuous { median }) => {
                v.iter_mut().filter(|c| c.is_none()).for_each(|c| *c = Some(*median));
            }
            (ColumnValues::Categorical(v), FillValue::Categorical { mode }) => {
                v.iter_mut()
                    .filter(|c| c.is_none())
                    .for_each(|c| *c = Some(mode.clone()));
            }
            _ => {
                return Err(SurvError::invalid(format!(
                    "imputation statistic for '{}' has the wrong kind",
                    col.name
                )))
            }
        }
    }
    Ok(table)
}

/// How an encoded column was produced; drives perturbation in VIMP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodedKind {
    Continuous,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoding {
    /// `(x − min) / (max − min)`, clipped to [0, 1].
    Continuous { min: f64, max: f64 },
    /// One indicator per level observed in training rows.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeStats {
    pub columns: Vec<(String, ColumnEncoding)>,
    pub warnings: Vec<String>,
}

impl EncodeStats {
    pub fn fit(table: &RawTable, rows: &[usize]) -> Result<Self> {
        let mut columns = Vec::new();
        let mut warnings = Vec::new();
        for col in &table.columns {
            let enc = match &col.values {
                ColumnValues::Continuous(v) => {
                    let seen = rows.iter().map(|&r| {
                        v[r].ok_or_else(|| {
                            SurvError::invalid(format!("column '{}' still has missing cells", col.name))
                        })
                    });
                    let mut min = f64::INFINITY;
                    let mut max = f64::NEG_INFINITY;
                    for x in seen {
                        let x = x?;
                        min = min.min(x);
                        max = max.max(x);
                    }
                    if !(max > min) {
                        warnings.push(format!(
                            "column '{}' is constant on training rows; encoded as zeros",
                            col.name
                        ));
                    }
                    ColumnEncoding::Continuous { min, max }
                }
                ColumnValues::Categorical(v) => {
                    let mut levels: Vec<String> = Vec::new();
                    for &r in rows {
                        let level = v[r].as_ref().ok_or_else(|| {
                            SurvError::invalid(format!("column '{}' still has missing cells", col.name))
                        })?;
                        if !levels.contains(level) {
                            levels.push(level.clone());
                        }
                    }
                    levels.sort();
                    ColumnEncoding::Categorical { levels }
                }
            };
            columns.push((col.name.clone(), enc));
        }
        Ok(EncodeStats { columns, warnings })
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .flat_map(|(name, enc)| match enc {
                ColumnEncoding::Continuous { .. } => vec![name.clone()],
                ColumnEncoding::Categorical { levels } => {
                    levels.iter().map(|l| format!("{name}={l}")).collect()
                }
            })
            .collect()
    }

    pub fn feature_kinds(&self) -> Vec<EncodedKind> {
        self.columns
            .iter()
            .flat_map(|(_, enc)| match enc {
                ColumnEncoding::Continuous { .. } => vec![EncodedKind::Continuous],
                ColumnEncoding::Categorical { levels } => vec![EncodedKind::Indicator; levels.len()],
            })
            .collect()
    }
}

/// Encoded matrix with one row per table row and values in [0, 1].
pub fn encode(table: &RawTable, stats: &EncodeStats) -> Result<Array2<f64>> {
    let n = table.n_rows();
    let width = stats.feature_names().len();
    let mut out = Array2::zeros((n, width));
    let mut offset = 0;
    for (name, enc) in &stats.columns {
        let col = table
            .column(name)
            .ok_or_else(|| SurvError::invalid(format!("column '{name}' missing from table")))?;
        match (&col.values, enc) {
            (ColumnValues::Continuous(v), ColumnEncoding::Continuous { min, max }) => {
                for (r, cell) in v.iter().enumerate() {
                    let x = cell.ok_or_else(|| {
                        SurvError::invalid(format!("column '{name}' has a missing cell at row {r}"))
                    })?;
                    out[[r, offset]] = if max > min {
                        ((x - min) / (max - min)).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                }
                offset += 1;
            }
            (ColumnValues::Categorical(v), ColumnEncoding::Categorical { levels }) => {
                for (r, cell) in v.iter().enumerate() {
                    let level = cell.as_ref().ok_or_else(|| {
                        SurvError::invalid(format!("column '{name}' has a missing cell at row {r}"))
                    })?;
                    // Levels unseen in training rows leave the block at zero.
                    if let Ok(k) = levels.binary_search(level) {
                        out[[r, offset + k]] = 1.0;
                    }
                }
                offset += levels.len();
            }
            _ => {
                return Err(SurvError::invalid(format!(
                    "encoding for '{name}' has the wrong kind"
                )))
            }
        }
    }
    Ok(out)
}
