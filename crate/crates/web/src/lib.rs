//! Browser bindings for three small demos: a Kaplan-Meier curve from pasted
//! records, concordance of a risk score, and training a tiny network on
//! synthetic data to show the survival head per stratum.
//!
//! Every function returns a JSON string; the page parses it and draws.

use mtsurv::net::{train, Activation, Architecture, HiddenLayer, S1Mode, TrainConfig};
use mtsurv::survival::{concordance_counts, kaplan_meier, SurvivalDataset};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

/// Parses lines of `time,event[,score]`; blank lines and `#` comments skipped.
fn parse_records(text: &str, with_score: bool) -> Result<(Vec<f64>, Vec<bool>, Vec<f64>), String> {
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut scores = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split([',', ' ', '\t']).filter(|c| !c.is_empty()).collect();
        let want = if with_score { 3 } else { 2 };
        if cells.len() < want {
            return Err(format!("line {}: expected {want} values", k + 1));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| format!("line {}: '{s}' is not a number", k + 1))
        };
        times.push(num(cells[0])?);
        events.push(match cells[1] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(format!("line {}: event must be 0 or 1, got '{other}'", k + 1)),
        });
        if with_score {
            scores.push(num(cells[2])?);
        }
    }
    Ok((times, events, scores))
}

#[derive(Serialize)]
struct KmOut {
    times: Vec<f64>,
    survival: Vec<f64>,
    at_risk: Vec<usize>,
    events: Vec<usize>,
    median: Option<f64>,
}

/// Kaplan-Meier estimate of `time,event` lines.
#[wasm_bindgen]
pub fn km_curve(text: &str) -> Result<String, JsError> {
    let (times, events, _) = parse_records(text, false).map_err(js_err)?;
    let km = kaplan_meier(&times, &events).map_err(js_err)?;
    let median = km
        .times
        .iter()
        .zip(&km.survival)
        .find(|(_, s)| **s <= 0.5)
        .map(|(t, _)| *t);
    to_json(&KmOut {
        times: km.times,
        survival: km.survival,
        at_risk: km.at_risk,
        events: km.events,
        median,
    })
}

#[derive(Serialize)]
struct ConcordanceOut {
    concordant: u64,
    tied: u64,
    discordant: u64,
    cindex: Option<f64>,
}

/// Concordance counts of `time,event,score` lines (higher score, earlier event).
#[wasm_bindgen]
pub fn concordance(text: &str) -> Result<String, JsError> {
    let (times, events, scores) = parse_records(text, true).map_err(js_err)?;
    let c = concordance_counts(&times, &events, &scores).map_err(js_err)?;
    to_json(&ConcordanceOut {
        concordant: c.concordant,
        tied: c.tied,
        discordant: c.discordant,
        cindex: c.index().ok(),
    })
}

/// Exponential times with log-rate `2·x0 − x1`, uniform censoring.
fn synthetic(n: usize, seed: u64) -> Result<SurvivalDataset, JsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Array2<f64> = Array2::from_shape_simple_fn((n, 3), || rng.random_range(0.0..1.0));
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for r in x.rows() {
        let rate = (2.0 * r[0] - r[1]).exp() * 0.3;
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let t = -u.ln() / rate;
        let c = rng.random_range(0.0..12.0);
        times.push(t.min(c).min(11.99));
        events.push(t <= c && t < 11.99);
    }
    let names = vec!["x0".into(), "x1".into(), "x2".into()];
    SurvivalDataset::new(x, times, events, names, 1.0).map_err(js_err)
}

#[derive(Serialize)]
struct TrainOut {
    epochs: usize,
    chosen_epoch: usize,
    validation_cindex: Option<f64>,
    losses: Vec<f64>,
    /// Mean survival head per tercile of `x0`.
    strata: Vec<Vec<f64>>,
}

/// Trains a one-layer network on synthetic records and returns the mean
/// survival head for low, middle and high values of the risk feature.
#[wasm_bindgen]
pub fn train_demo(seed: u32, n: u32, epochs: u32, lambda_rank: f64) -> Result<String, JsError> {
    let n = (n as usize).clamp(60, 4000);
    let seed = u64::from(seed);
    let data = synthetic(n, seed)?;
    let cut = n * 4 / 5;
    let idx: Vec<usize> = (0..n).collect();
    let train_set = data.subset(&idx[..cut]).map_err(js_err)?;
    let validation = data.subset(&idx[cut..]).map_err(js_err)?;
    let arch = Architecture {
        input_dim: 3,
        hidden: vec![HiddenLayer {
            width: 16,
            activation: Activation::Relu,
            dropout: 0.0,
            batch_norm: false,
        }],
        horizon: data.horizon(),
        s1_mode: S1Mode::LogHazard,
    };
    let config = TrainConfig {
        learning_rate: 3e-3,
        lambda_rank: lambda_rank.max(0.0),
        max_epochs: (epochs as usize).clamp(1, 300),
        patience: 300,
        seed,
        ..TrainConfig::default()
    };
    let outcome = train(&arch, &config, &train_set, &validation).map_err(js_err)?;
    let (_, s2) = outcome.state.predict(data.features().view()).map_err(js_err)?;
    let mut strata = vec![vec![0.0; s2.ncols()]; 3];
    let mut counts = [0usize; 3];
    for (i, row) in s2.rows().into_iter().enumerate() {
        let k = ((data.features()[[i, 0]] * 3.0) as usize).min(2);
        counts[k] += 1;
        for (a, v) in strata[k].iter_mut().zip(row) {
            *a += v;
        }
    }
    for (curve, c) in strata.iter_mut().zip(counts) {
        curve.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    to_json(&TrainOut {
        epochs: outcome.history.epochs.len(),
        chosen_epoch: outcome.history.chosen_epoch,
        validation_cindex: outcome.history.best_validation_cindex,
        losses: outcome.history.epochs.iter().map(|e| e.total).collect(),
        strata,
    })
}
