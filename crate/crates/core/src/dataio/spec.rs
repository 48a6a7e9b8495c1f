use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

/// Overrides the directory holding dataset CSV files.
pub const DATA_DIR_ENV: &str = "MTSURV_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub column: String,
    /// Cell values meaning "event observed"; anything else is censored.
    pub event_values: Vec<String>,
}

/// Keeps only rows whose `column` holds one of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFilter {
    pub column: String,
    pub values: Vec<String>,
}

/// Reference characteristics a shipped dataset must reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedFingerprint {
    pub rows: usize,
    pub censored: usize,
    pub unique_times: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    /// CSV location, relative to the data directory.
    pub path: PathBuf,
    pub time_column: String,
    /// When set, observed time is `time_column − start_column`.
    #[serde(default)]
    pub start_column: Option<String>,
    pub event: EventSpec,
    pub features: Vec<FeatureSpec>,
    pub time_unit_length: f64,
    #[serde(default = "default_missing_token")]
    pub missing_token: String,
    #[serde(default = "default_missing_threshold")]
    pub missing_threshold: f64,
    #[serde(default)]
    pub filter: Option<RowFilter>,
    #[serde(default)]
    pub expected: Option<ExpectedFingerprint>,
    /// Directory the spec was loaded from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_missing_token() -> String {
    "NA".to_string()
}

fn default_missing_threshold() -> f64 {
    0.20
}

impl DatasetSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: DatasetSpec =
            toml::from_str(text).map_err(|e| SurvError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SurvError::io(path, e))?;
        let mut spec = Self::from_toml(&text).map_err(|e| match e {
            SurvError::Config(msg) => SurvError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_unit_length > 0.0) {
            return Err(SurvError::Config(format!(
                "{}: time_unit_length must be positive",
                self.name
            )));
        }
        if !(self.missing_threshold > 0.0 && self.missing_threshold <= 1.0) {
            return Err(SurvError::Config(format!(
                "{}: missing_threshold must lie in (0, 1]",
                self.name
            )));
        }
        if self.event.event_values.is_empty() {
            return Err(SurvError::Config(format!(
                "{}: event_values must not be empty",
                self.name
            )));
        }
        for f in &self.features {
            if f.name == self.time_column || f.name == self.event.column {
                return Err(SurvError::Config(format!(
                    "{}: '{}' is an outcome column and cannot be a feature",
                    self.name, f.name
                )));
            }
        }
        Ok(())
    }

    /// Resolves the CSV path: absolute paths are used as is, relative ones
    /// against `$MTSURV_DATA_DIR` when set, else against the spec's directory.
    pub fn resolved_path(&self) -> PathBuf {
        if self.path.is_absolute() {
            return self.path.clone();
        }
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            return PathBuf::from(dir).join(&self.path);
        }
        match &self.base_dir {
            Some(dir) => dir.join(&self.path),
            None => self.path.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
name = "toy"
path = "toy.csv"
time_column = "time"
time_unit_length = 12.0

[event]
column = "status"
event_values = ["1"]

[[features]]
name = "age"
kind = "continuous"

[[features]]
name = "sex"
kind = "categorical"
"#;

    #[test]
    fn parses_with_defaults() {
        let spec = DatasetSpec::from_toml(SPEC).unwrap();
        assert_eq!(spec.missing_token, "NA");
        assert_eq!(spec.missing_threshold, 0.2);
        assert_eq!(spec.features[1].kind, FeatureKind::Categorical);
    }

    #[test]
    fn outcome_column_cannot_be_feature() {
        let bad = SPEC.replace("name = \"age\"", "name = \"time\"");
        assert!(DatasetSpec::from_toml(&bad).is_err());
    }

    #[test]
    fn non_positive_unit_rejected() {
        let bad = SPEC.replace("12.0", "0.0");
        assert!(DatasetSpec::from_toml(&bad).is_err());
    }
}
