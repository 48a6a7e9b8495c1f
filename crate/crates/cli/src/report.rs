//! Metric reports written by `run` and `search`.

use std::path::Path;

use mtsurv::dataio::Fingerprint;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind, Trial};
use crate::error::CliError;
use crate::model::CoxDiagnostics;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split_seed: u64,
    /// Network initialisation and shuffling seed.
    pub train_seed: Option<u64>,
    /// C-index of the model's risk score on the test split.
    pub test_cindex: Option<f64>,
    pub test_cindex_s1: Option<f64>,
    /// C-index of `-mean(s2)`.
    pub test_cindex_head: Option<f64>,
    pub validation_cindex: Option<f64>,
    /// Censored AUROC per time unit on the test split.
    pub auroc: Vec<Option<f64>>,
    pub chosen_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    pub monotonicity_violation_rate: Option<f64>,
    pub cox: Option<CoxDiagnostics>,
    pub aborted: Option<String>,
    pub merged_cells: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` below two values.
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        if n == 0 {
            return Summary {
                n,
                mean: None,
                sd: None,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Summary {
            n,
            mean: Some(mean),
            sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: u32,
    pub dataset: String,
    pub model: ModelKind,
    pub fingerprint: Fingerprint,
    pub dropped_features: Vec<String>,
    pub feature_names: Vec<String>,
    pub unit_length: f64,
    pub horizon: usize,
    /// The configuration that produced this report.
    pub config: ExperimentConfig,
    pub splits: Vec<SplitResult>,
    pub test_cindex: Summary,
}

/// Wall-clock timings, kept apart from the report so reports stay
/// byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub per_split_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: Trial,
    pub validation_cindex: Option<f64>,
    pub test_cindex: Option<f64>,
    pub chosen_epoch: Option<usize>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub version: u32,
    pub dataset: String,
    pub model: ModelKind,
    pub split_seed: u64,
    pub master_seed: u64,
    pub trials: Vec<TrialRecord>,
    /// Index of the trial with the highest validation C-index.
    pub best: usize,
    pub best_validation_cindex: f64,
    pub best_test_cindex: Option<f64>,
}

impl SearchReport {
    pub fn trials_csv(&self) -> String {
        let mut s = String::from(
            "trial,depth,widths,dropout,batch_norm,activation,s1_mode,learning_rate,batch_size,\
             lambda_rank,l1,l2,clip_norm,seed,validation_cindex,test_cindex,chosen_epoch,status\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.trials {
            let t = &r.trial;
            let join = |f: &dyn Fn(&mtsurv::net::HiddenLayer) -> String| {
                t.hidden.iter().map(f).collect::<Vec<_>>().join(";")
            };
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                t.index,
                t.hidden.len(),
                join(&|h| h.width.to_string()),
                join(&|h| h.dropout.to_string()),
                join(&|h| h.batch_norm.to_string()),
                join(&|h| format!("{:?}", h.activation).to_lowercase()),
                match t.s1_mode {
                    mtsurv::net::S1Mode::LogHazard => "log-hazard",
                    mtsurv::net::S1Mode::Hazard => "hazard",
                },
                t.train.learning_rate,
                t.train.batch_size,
                t.train.lambda_rank,
                t.train.l1,
                t.train.l2,
                t.train.clip_norm,
                t.train.seed,
                opt(r.validation_cindex),
                opt(r.test_cindex),
                r.chosen_epoch.map(|e| e.to_string()).unwrap_or_default(),
                csv_field(&r.status),
            ));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_uses_sample_sd() {
        let s = Summary::of([1.0, 2.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.sd, Some(1.0));
        assert_eq!(Summary::of([4.0]).sd, None);
        assert_eq!(Summary::of([]).mean, None);
    }

    #[test]
    fn quotes_csv_fields() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("ok"), "ok");
    }
}
