//! Fitted-model artifacts and the predictors built from them.

use std::path::Path;

use mtsurv::cox::{fit_cox, CoxModel};
use mtsurv::dataio::{PreparedData, SplitFractions};
use mtsurv::net::{train, Architecture, NetworkState, TrainConfig, TrainHistory};
use mtsurv::survival::{discretize_time, SurvivalDataset};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::{CoxSettings, ModelKind};
use crate::error::CliError;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fitted {
    Cox {
        model: CoxModel,
        /// Breslow cumulative baseline hazard at the end of each time unit,
        /// for risk scores shifted by `risk_offset`.
        baseline_cumhaz: Vec<f64>,
        risk_offset: f64,
    },
    Network {
        state: NetworkState,
        /// Rank by `-mean(s2)` instead of `s1`.
        selects_on_head: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub dataset: String,
    pub model: ModelKind,
    pub split_seed: u64,
    pub fractions: SplitFractions,
    pub feature_names: Vec<String>,
    pub unit_length: f64,
    pub horizon: usize,
    pub fitted: Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxDiagnostics {
    pub converged: bool,
    pub status: String,
    pub iterations: usize,
    pub l2_used: f64,
}

impl ModelArtifact {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let artifact: ModelArtifact = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if artifact.version != ARTIFACT_VERSION {
            return Err(CliError::Data(format!(
                "{}: unsupported artifact version {}",
                path.display(),
                artifact.version
            )));
        }
        Ok(artifact)
    }

    /// Fails unless `ds` has the columns this model was fitted on.
    pub fn check_compatible(&self, ds: &SurvivalDataset) -> Result<(), CliError> {
        if ds.feature_names() != self.feature_names.as_slice() {
            return Err(CliError::Data(format!(
                "dataset columns do not match the model ({} vs {} features)",
                ds.n_features(),
                self.feature_names.len()
            )));
        }
        if ds.horizon() > self.horizon {
            return Err(CliError::Data(format!(
                "dataset horizon {} exceeds the model's {}",
                ds.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }

    /// Risk scores: higher means an earlier expected event.
    pub fn risk(&self, x: ArrayView2<'_, f64>) -> mtsurv::Result<Vec<f64>> {
        match &self.fitted {
            Fitted::Cox { model, .. } => model.predict_risks(x),
            Fitted::Network {
                state,
                selects_on_head,
            } => {
                let (s1, s2) = state.predict(x)?;
                Ok(if *selects_on_head {
                    head_risk(&s2)
                } else {
                    s1.to_vec()
                })
            }
        }
    }

    /// Survival probability past each time unit, records × horizon.
    pub fn survival(&self, x: ArrayView2<'_, f64>) -> mtsurv::Result<Array2<f64>> {
        match &self.fitted {
            Fitted::Cox {
                model,
                baseline_cumhaz,
                risk_offset,
            } => {
                let risks = model.predict_risks(x)?;
                let mut out = Array2::zeros((risks.len(), baseline_cumhaz.len()));
                for (i, r) in risks.iter().enumerate() {
                    let m = (r - risk_offset).exp();
                    for (t, h) in baseline_cumhaz.iter().enumerate() {
                        out[[i, t]] = (-h * m).exp();
                    }
                }
                Ok(out)
            }
            Fitted::Network { state, .. } => Ok(state.predict(x)?.1),
        }
    }
}

pub fn head_risk(s2: &Array2<f64>) -> Vec<f64> {
    s2.mean_axis(Axis(1))
        .map(|m| m.iter().map(|v| -v).collect())
        .unwrap_or_default()
}

/// Breslow estimate of the cumulative baseline hazard at the end of each unit.
///
/// Risks are shifted by their maximum so the exponentials cannot overflow.
pub fn breslow_baseline(
    ds: &SurvivalDataset,
    risks: &[f64],
    horizon: usize,
) -> mtsurv::Result<(Vec<f64>, f64)> {
    let offset = risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let offset = if offset.is_finite() { offset } else { 0.0 };
    let mut increments = vec![0.0; horizon];
    for group in ds.tie_groups() {
        let denom: f64 = ds
            .times()
            .iter()
            .zip(risks)
            .filter(|(t, _)| **t >= group.time)
            .map(|(_, r)| (r - offset).exp())
            .sum();
        let bin = discretize_time(group.time, ds.unit_length())?;
        if bin < horizon {
            increments[bin] += group.members.len() as f64 / denom;
        }
    }
    let mut acc = 0.0;
    let cumhaz = increments
        .iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect();
    Ok((cumhaz, offset))
}

fn artifact(prep: &PreparedData, kind: ModelKind, fitted: Fitted) -> ModelArtifact {
    ModelArtifact {
        version: ARTIFACT_VERSION,
        dataset: prep.name.clone(),
        model: kind,
        split_seed: prep.split.seed,
        fractions: prep.fractions,
        feature_names: prep.dataset.feature_names().to_vec(),
        unit_length: prep.dataset.unit_length(),
        horizon: prep.dataset.horizon(),
        fitted,
    }
}

/// Fits the Cox baseline on the training and validation rows together,
/// refitting with a small ridge penalty if the plain fit does not converge.
pub fn fit_cox_artifact(
    prep: &PreparedData,
    settings: &CoxSettings,
) -> Result<(ModelArtifact, CoxDiagnostics), CliError> {
    let ds = prep.dataset.subset(&prep.split.train_and_validation())?;
    let mut l2 = settings.l2;
    let mut model = fit_cox(&ds, &settings.options(l2))?;
    if !model.converged && settings.l2_fallback > l2 {
        log::warn!(
            "{}: Cox fit did not converge ({}); refitting with l2 = {}",
            prep.name,
            model.status,
            settings.l2_fallback
        );
        l2 = settings.l2_fallback;
        model = fit_cox(&ds, &settings.options(l2))?;
    }
    let risks = model.predict_risks(ds.features().view())?;
    let (baseline_cumhaz, risk_offset) = breslow_baseline(&ds, &risks, prep.dataset.horizon())?;
    let diagnostics = CoxDiagnostics {
        converged: model.converged,
        status: model.status.clone(),
        iterations: model.iterations,
        l2_used: l2,
    };
    let fitted = Fitted::Cox {
        model,
        baseline_cumhaz,
        risk_offset,
    };
    Ok((artifact(prep, ModelKind::Cox, fitted), diagnostics))
}

pub fn train_network_artifact(
    prep: &PreparedData,
    kind: ModelKind,
    architecture: &Architecture,
    config: &TrainConfig,
) -> Result<(ModelArtifact, TrainHistory), CliError> {
    let outcome = train(architecture, config, &prep.train()?, &prep.validation()?)?;
    let fitted = Fitted::Network {
        state: outcome.state,
        selects_on_head: config.selects_on_head(),
    };
    Ok((artifact(prep, kind, fitted), outcome.history))
}
