//! The `prep`, `run`, `search`, `curves` and `vimp` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mtsurv::analysis::{vimp_all, VimpConfig, VimpReport};
use mtsurv::dataio::{prepare, DatasetSpec, PreparedData, SplitFractions};
use mtsurv::net::{monotonicity_violation_rate, TrainHistory};
use mtsurv::survival::{concordance_index, survival_labels_for, auroc_series, SurvivalDataset};
use mtsurv::SurvError;

use crate::config::{ExperimentConfig, ModelKind, Trial};
use crate::curves::{compute_curves, write_curves};
use crate::error::CliError;
use crate::model::{fit_cox_artifact, head_risk, train_network_artifact, Fitted, ModelArtifact};
use crate::report::{
    write_json, MetricReport, SearchReport, SplitResult, Summary, Timing, TrialRecord,
    REPORT_VERSION,
};

pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";
pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const VIMP_FILE: &str = "vimp.csv";

pub fn load_spec(path: &Path) -> Result<DatasetSpec, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("spec {} does not exist", path.display())));
    }
    Ok(DatasetSpec::load(path)?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Loads, splits and encodes a dataset and writes the artifacts to `out`.
pub fn cmd_prep(
    spec_path: &Path,
    fractions: SplitFractions,
    seed: u64,
    out: &Path,
) -> Result<PreparedData, CliError> {
    let spec = load_spec(spec_path)?;
    let prep = prepare(&spec, fractions, seed)?;
    prep.write(out)?;
    Ok(prep)
}

/// C-index, or `None` when no pair is admissible.
fn cindex(ds: &SurvivalDataset, scores: &[f64]) -> Result<Option<f64>, CliError> {
    match concordance_index(ds.times(), ds.events(), scores) {
        Ok(c) => Ok(Some(c)),
        Err(SurvError::UndefinedMetric(m)) => {
            log::warn!("C-index undefined: {m}");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn evaluate(
    artifact: &ModelArtifact,
    prep: &PreparedData,
    history: Option<&TrainHistory>,
) -> Result<SplitResult, CliError> {
    let test = prep.test()?;
    let x = test.features().view();
    let s2 = artifact.survival(x)?;
    let labels = survival_labels_for(test.times(), test.events(), test.unit_length(), artifact.horizon)?;
    let auroc = auroc_series(&labels, s2.view())?;
    let test_cindex = cindex(&test, &artifact.risk(x)?)?;
    let mut result = SplitResult {
        split_seed: prep.split.seed,
        train_seed: None,
        test_cindex,
        test_cindex_s1: None,
        test_cindex_head: None,
        validation_cindex: None,
        auroc,
        chosen_epoch: None,
        epochs_run: None,
        monotonicity_violation_rate: None,
        cox: None,
        aborted: None,
        merged_cells: prep.split.merged_cells.clone(),
    };
    if let Fitted::Network { state, .. } = &artifact.fitted {
        let (s1, s2) = state.predict(x)?;
        result.test_cindex_s1 = cindex(&test, s1.as_slice().expect("contiguous"))?;
        result.test_cindex_head = cindex(&test, &head_risk(&s2))?;
        result.monotonicity_violation_rate = Some(monotonicity_violation_rate(s2.view()));
    }
    if let Some(h) = history {
        result.validation_cindex = h.best_validation_cindex;
        result.chosen_epoch = Some(h.chosen_epoch);
        result.epochs_run = Some(h.epochs.len());
        result.aborted = h.aborted.clone();
    }
    Ok(result)
}

/// The config as echoed into reports: no output location.
fn echo(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.out = None;
    c
}

pub struct RunOutcome {
    pub report: MetricReport,
    pub timing: Timing,
}

/// Fits or trains the configured model on each split seed, evaluates it on
/// the test split and writes the report, model artifacts and curves.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, svg: bool) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let spec = load_spec(&cfg.spec_path())?;
    let table = mtsurv::dataio::load_csv(&spec)?;
    create_dir(out)?;
    let started = Instant::now();
    let mut splits = Vec::with_capacity(cfg.splits);
    let mut per_split = Vec::with_capacity(cfg.splits);
    let mut first: Option<PreparedData> = None;
    for k in 0..cfg.splits {
        let t0 = Instant::now();
        let split_seed = cfg.seed.wrapping_add(k as u64);
        let prep = mtsurv::dataio::prepare_table(&spec, table.clone(), cfg.split, split_seed)?;
        let dir = out.join(format!("split_{split_seed}"));
        create_dir(&dir)?;
        let result = run_split(cfg, &prep, k, &dir, svg)?;
        log::info!(
            "{} {} split {split_seed}: test C-index {:?}",
            prep.name,
            cfg.model.name(),
            result.test_cindex
        );
        splits.push(result);
        per_split.push(t0.elapsed().as_secs_f64());
        first.get_or_insert(prep);
    }
    let prep = first.expect("at least one split");
    let report = MetricReport {
        version: REPORT_VERSION,
        dataset: prep.name.clone(),
        model: cfg.model,
        fingerprint: prep.fingerprint,
        dropped_features: prep.dropped.clone(),
        feature_names: prep.dataset.feature_names().to_vec(),
        unit_length: prep.dataset.unit_length(),
        horizon: prep.dataset.horizon(),
        config: echo(cfg),
        test_cindex: Summary::of(splits.iter().filter_map(|s| s.test_cindex)),
        splits,
    };
    let timing = Timing {
        total_seconds: started.elapsed().as_secs_f64(),
        per_split_seconds: per_split,
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    write_json(&out.join(TIMING_FILE), &timing)?;
    Ok(RunOutcome { report, timing })
}

fn run_split(
    cfg: &ExperimentConfig,
    prep: &PreparedData,
    k: usize,
    dir: &Path,
    svg: bool,
) -> Result<SplitResult, CliError> {
    let (artifact, mut result) = if cfg.model == ModelKind::Cox {
        let (artifact, diag) = fit_cox_artifact(prep, &cfg.cox)?;
        let mut result = evaluate(&artifact, prep, None)?;
        result.cox = Some(diag);
        (artifact, result)
    } else {
        let mut train = cfg.effective_train();
        train.seed = train.seed.wrapping_add(k as u64);
        let arch = cfg.architecture(prep.dataset.n_features(), prep.dataset.horizon());
        let (artifact, history) = train_network_artifact(prep, cfg.model, &arch, &train)?;
        history
            .write_csv(&dir.join(HISTORY_FILE))
            .map_err(CliError::from)?;
        if history.chosen_epoch == 0 {
            return Err(CliError::Numeric(format!(
                "training aborted before completing an epoch: {}",
                history.aborted.as_deref().unwrap_or("unknown cause")
            )));
        }
        let mut result = evaluate(&artifact, prep, Some(&history))?;
        result.train_seed = Some(train.seed);
        (artifact, result)
    };
    artifact.save(&dir.join(MODEL_FILE))?;
    let curves = compute_curves(&artifact, &prep.test()?)?;
    write_curves(dir, &curves, svg)?;
    if result.aborted.is_some() {
        log::warn!("training stopped early: {:?}", result.aborted);
    }
    result.merged_cells.sort();
    Ok(result)
}

fn run_trial(
    cfg: &ExperimentConfig,
    prep: &PreparedData,
    trial: &Trial,
    dir: &Path,
) -> TrialRecord {
    let mut record = TrialRecord {
        trial: trial.clone(),
        validation_cindex: None,
        test_cindex: None,
        chosen_epoch: None,
        status: String::new(),
    };
    let mut train = trial.train.clone();
    cfg.model.apply(&mut train);
    record.trial.train = train.clone();
    let arch = mtsurv::net::Architecture {
        input_dim: prep.dataset.n_features(),
        hidden: trial.hidden.clone(),
        horizon: prep.dataset.horizon(),
        s1_mode: trial.s1_mode,
    };
    let outcome = train_network_artifact(prep, cfg.model, &arch, &train).and_then(|(a, h)| {
        create_dir(dir)?;
        h.write_csv(&dir.join(HISTORY_FILE))?;
        a.save(&dir.join(MODEL_FILE))?;
        let test = prep.test()?;
        let c = cindex(&test, &a.risk(test.features().view())?)?;
        Ok((h, c))
    });
    match outcome {
        Ok((h, test_c)) if h.chosen_epoch > 0 => {
            record.validation_cindex = h.best_validation_cindex;
            record.chosen_epoch = Some(h.chosen_epoch);
            record.test_cindex = test_c;
            record.status = match &h.aborted {
                Some(m) => format!("stopped early: {m}"),
                None => "ok".into(),
            };
        }
        Ok((h, _)) => {
            record.status = format!("failed: {}", h.aborted.unwrap_or_default());
        }
        Err(e) => record.status = format!("failed: {e}"),
    }
    record
}

/// Random search over the configured space on one split; trials run in
/// parallel on `workers` threads.
pub fn cmd_search(
    cfg: &ExperimentConfig,
    out: &Path,
    workers: usize,
) -> Result<SearchReport, CliError> {
    cfg.validate()?;
    if !cfg.model.is_network() {
        return Err(CliError::Usage("search needs a network model kind".into()));
    }
    let spec = load_spec(&cfg.spec_path())?;
    let prep = prepare(&spec, cfg.split, cfg.seed)?;
    create_dir(out)?;
    let space = &cfg.search;
    let trials: Vec<Trial> = (0..space.trials)
        .map(|i| space.sample(i, &cfg.train))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        use rayon::prelude::*;
        trials
            .par_iter()
            .map(|t| run_trial(cfg, &prep, t, &out.join(format!("trial_{:03}", t.index))))
            .collect()
    });

    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        if let Some(v) = r.validation_cindex {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let Some((best, best_validation_cindex)) = best else {
        let details: Vec<String> = records
            .iter()
            .map(|r| format!("trial {}: {}", r.trial.index, r.status))
            .collect();
        return Err(CliError::Numeric(format!(
            "every trial failed\n{}",
            details.join("\n")
        )));
    };
    let report = SearchReport {
        version: REPORT_VERSION,
        dataset: prep.name.clone(),
        model: cfg.model,
        split_seed: cfg.seed,
        master_seed: space.master_seed,
        best_test_cindex: records[best].test_cindex,
        trials: records,
        best,
        best_validation_cindex,
    };
    let csv_path = out.join("trials.csv");
    std::fs::write(&csv_path, report.trials_csv()).map_err(|e| CliError::io(&csv_path, e))?;
    write_json(&out.join("search.json"), &report)?;

    let mut best_cfg = echo(cfg);
    let chosen = &report.trials[best].trial;
    best_cfg.hidden = chosen.hidden.clone();
    best_cfg.s1_mode = chosen.s1_mode;
    best_cfg.train = chosen.train.clone();
    let best_path = out.join("best.toml");
    std::fs::write(&best_path, best_cfg.to_toml()).map_err(|e| CliError::io(&best_path, e))?;
    Ok(report)
}

/// Re-creates the split a model was fitted on and returns its test rows.
fn test_split_for(artifact: &ModelArtifact, spec_path: &Path) -> Result<SurvivalDataset, CliError> {
    let spec = load_spec(spec_path)?;
    let prep = prepare(&spec, artifact.fractions, artifact.split_seed)?;
    let test = prep.test()?;
    artifact.check_compatible(&test)?;
    Ok(test)
}

pub fn cmd_curves(model: &Path, spec_path: &Path, out: &Path, svg: bool) -> Result<(), CliError> {
    let artifact = ModelArtifact::load(model)?;
    let test = test_split_for(&artifact, spec_path)?;
    let curves = compute_curves(&artifact, &test)?;
    write_curves(out, &curves, svg)
}

pub fn vimp_csv(report: &VimpReport) -> String {
    let mut s = String::from("feature,baseline_error,perturbed_error,vimp,vimp_sd\n");
    for e in &report.entries {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            e.feature, e.baseline_error, e.perturbed_error, e.vimp, e.vimp_sd
        ));
    }
    s
}

/// VIMP of every encoded feature on the test split, sorted descending.
pub fn cmd_vimp(
    model: &Path,
    spec_path: &Path,
    config: &VimpConfig,
    out: &Path,
) -> Result<VimpReport, CliError> {
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let artifact = ModelArtifact::load(model)?;
    let spec = load_spec(spec_path)?;
    let prep = prepare(&spec, artifact.fractions, artifact.split_seed)?;
    let test = prep.test()?;
    artifact.check_compatible(&test)?;
    let predictor = |x: ndarray::ArrayView2<'_, f64>| artifact.risk(x);
    let report = vimp_all(&predictor, &test, &prep.feature_kinds, config)?;
    create_dir(out)?;
    let path = out.join(VIMP_FILE);
    std::fs::write(&path, vimp_csv(&report)).map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}

/// Output directory: the flag, else the config's `out`, else `./out`.
pub fn resolve_out(flag: Option<PathBuf>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    flag.or_else(|| cfg.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}
