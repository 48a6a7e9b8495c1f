//! CSV ingestion, preprocessing and the stratified split.
//!
//! [`prepare`] runs the whole pipeline: load, drop columns with too many
//! missing cells, split, then fit imputation and encoding on training rows
//! only and apply them to every row.

mod pipeline;
mod spec;
mod split;
mod table;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};
use crate::survival::SurvivalDataset;

pub use pipeline::{
    drop_sparse_features, encode, impute, ColumnEncoding, EncodeStats, EncodedKind, FillValue,
    ImputeStats,
};
pub use spec::{
    DatasetSpec, EventSpec, ExpectedFingerprint, FeatureKind, FeatureSpec, RowFilter, DATA_DIR_ENV,
};
pub use split::{stratified_split, stratified_split_dataset, SplitFractions, SplitIndices};
pub use table::{load_csv, ColumnValues, RawColumn, RawTable};

pub const MANIFEST_VERSION: u32 = 1;
pub const ENCODED_FILE: &str = "encoded.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Row count, censoring and distinct-time summary of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub censored: usize,
    pub censored_percent: f64,
    pub unique_times: usize,
}

impl Fingerprint {
    pub fn of(times: &[f64], events: &[bool]) -> Self {
        let rows = times.len();
        let censored = events.iter().filter(|e| !**e).count();
        let mut bits: Vec<u64> = times.iter().map(|t| t.to_bits()).collect();
        bits.sort_unstable();
        bits.dedup();
        Fingerprint {
            rows,
            censored,
            censored_percent: 100.0 * censored as f64 / rows.max(1) as f64,
            unique_times: bits.len(),
        }
    }

    /// Row count must match; censored share within half a percentage point.
    pub fn check(&self, expected: &ExpectedFingerprint) -> Result<()> {
        let expected_pct = 100.0 * expected.censored as f64 / expected.rows.max(1) as f64;
        if self.rows != expected.rows || (self.censored_percent - expected_pct).abs() > 0.5 {
            return Err(SurvError::invalid(format!(
                "dataset fingerprint mismatch: {} rows / {:.1}% censored, expected {} rows / {:.1}%",
                self.rows, self.censored_percent, expected.rows, expected_pct
            )));
        }
        if self.unique_times != expected.unique_times {
            log::warn!(
                "{} distinct times, reference reports {}",
                self.unique_times,
                expected.unique_times
            );
        }
        Ok(())
    }
}

/// An encoded dataset together with everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub dataset: SurvivalDataset,
    pub feature_kinds: Vec<EncodedKind>,
    pub split: SplitIndices,
    pub fractions: SplitFractions,
    pub impute: ImputeStats,
    pub encode: EncodeStats,
    pub dropped: Vec<String>,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    name: String,
    seed: u64,
    fractions: SplitFractions,
    unit_length: f64,
    horizon: usize,
    fingerprint: Fingerprint,
    feature_names: Vec<String>,
    feature_kinds: Vec<EncodedKind>,
    dropped_features: Vec<String>,
    impute: ImputeStats,
    encode: EncodeStats,
    split: SplitIndices,
}

/// Loads, cleans, splits and encodes the dataset described by `spec`.
pub fn prepare(spec: &DatasetSpec, fractions: SplitFractions, seed: u64) -> Result<PreparedData> {
    let table = load_csv(spec)?;
    prepare_table(spec, table, fractions, seed)
}

pub fn prepare_table(
    spec: &DatasetSpec,
    table: RawTable,
    fractions: SplitFractions,
    seed: u64,
) -> Result<PreparedData> {
    if table.n_rows() == 0 {
        return Err(SurvError::invalid(format!("{}: no rows", spec.name)));
    }
    let fingerprint = Fingerprint::of(&table.times, &table.events);
    if let Some(expected) = &spec.expected {
        fingerprint
            .check(expected)
            .map_err(|e| match e {
                SurvError::InvalidInput(m) => SurvError::invalid(format!("{}: {m}", spec.name)),
                other => other,
            })?;
    }
    let table = drop_sparse_features(table, spec.missing_threshold)?;
    let split = stratified_split(
        &table.times,
        &table.events,
        spec.time_unit_length,
        fractions,
        seed,
    )?;
    let impute_stats = ImputeStats::fit(&table, &split.train)?;
    let table = impute(table, &impute_stats)?;
    let encode_stats = EncodeStats::fit(&table, &split.train)?;
    for w in &encode_stats.warnings {
        log::warn!("{}: {w}", spec.name);
    }
    let matrix = encode(&table, &encode_stats)?;
    let dataset = SurvivalDataset::new(
        matrix,
        table.times.clone(),
        table.events.clone(),
        encode_stats.feature_names(),
        spec.time_unit_length,
    )?;
    Ok(PreparedData {
        name: spec.name.clone(),
        feature_kinds: encode_stats.feature_kinds(),
        dataset,
        split,
        fractions,
        impute: impute_stats,
        encode: encode_stats,
        dropped: table.dropped,
        fingerprint,
    })
}

impl PreparedData {
    pub fn train(&self) -> Result<SurvivalDataset> {
        self.dataset.subset(&self.split.train)
    }

    pub fn validation(&self) -> Result<SurvivalDataset> {
        self.dataset.subset(&self.split.validation)
    }

    pub fn test(&self) -> Result<SurvivalDataset> {
        self.dataset.subset(&self.split.test)
    }

    /// Writes the encoded matrix and the manifest into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SurvError::io(dir, e))?;
        let csv_path = dir.join(ENCODED_FILE);
        let mut wtr = csv::Writer::from_path(&csv_path)?;
        let mut header = vec!["time".to_string(), "event".to_string(), "split".to_string()];
        header.extend(self.dataset.feature_names().iter().cloned());
        wtr.write_record(&header)?;
        let mut part = vec![""; self.dataset.len()];
        for (name, rows) in ["train", "validation", "test"].iter().zip(self.split.parts()) {
            for &r in rows {
                part[r] = name;
            }
        }
        for i in 0..self.dataset.len() {
            let mut row = vec![
                self.dataset.times()[i].to_string(),
                u8::from(self.dataset.events()[i]).to_string(),
                part[i].to_string(),
            ];
            row.extend(self.dataset.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| SurvError::io(&csv_path, e))?;

        let manifest = Manifest {
            version: MANIFEST_VERSION,
            name: self.name.clone(),
            seed: self.split.seed,
            fractions: self.fractions,
            unit_length: self.dataset.unit_length(),
            horizon: self.dataset.horizon(),
            fingerprint: self.fingerprint,
            feature_names: self.dataset.feature_names().to_vec(),
            feature_kinds: self.feature_kinds.clone(),
            dropped_features: self.dropped.clone(),
            impute: self.impute.clone(),
            encode: self.encode.clone(),
            split: self.split.clone(),
        };
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|e| SurvError::io(&path, e))
    }

    /// Reads artifacts written by [`PreparedData::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| SurvError::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(SurvError::Schema {
                path,
                msg: format!("unsupported manifest version {}", manifest.version),
            });
        }
        let csv_path = dir.join(ENCODED_FILE);
        let mut rdr = csv::Reader::from_path(&csv_path)?;
        let p = manifest.feature_names.len();
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| SurvError::Parse {
                        path: csv_path.clone(),
                        row: line + 2,
                        column: format!("#{i}"),
                        msg: "expected a number".into(),
                    })
            };
            times.push(parse(0)?);
            events.push(parse(1)? != 0.0);
            for j in 0..p {
                values.push(parse(3 + j)?);
            }
        }
        let n = times.len();
        let features = Array2::from_shape_vec((n, p), values)
            .map_err(|e| SurvError::invalid(e.to_string()))?;
        let dataset = SurvivalDataset::with_horizon(
            features,
            times,
            events,
            manifest.feature_names,
            manifest.unit_length,
            manifest.horizon,
        )?;
        Ok(PreparedData {
            name: manifest.name,
            dataset,
            feature_kinds: manifest.feature_kinds,
            split: manifest.split,
            fractions: manifest.fractions,
            impute: manifest.impute,
            encode: manifest.encode,
            dropped: manifest.dropped_features,
            fingerprint: manifest.fingerprint,
        })
    }
}
