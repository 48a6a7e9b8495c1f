use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{combined_loss, penalty, BatchTargets, LossWeights, RankOrientation};
use super::optim::{clip_gradients, Adam};
use super::{Architecture, NetworkState};
use crate::error::{Result, SurvError};
use crate::survival::{concordance_index, survival_labels, SurvivalDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the partial-likelihood term (0 trains on the ranking loss alone).
    pub efron_weight: f64,
    pub lambda_rank: f64,
    pub l1: f64,
    pub l2: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub orientation: RankOrientation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 32,
            efron_weight: 1.0,
            lambda_rank: 1.0,
            l1: 0.0,
            l2: 0.0,
            clip_norm: 5.0,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            orientation: RankOrientation::SurvivorFirst,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SurvError::invalid(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        for (name, v) in [
            ("efron_weight", self.efron_weight),
            ("lambda_rank", self.lambda_rank),
            ("l1", self.l1),
            ("l2", self.l2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        Ok(())
    }

    /// Ranking-only models select on the head: the risk score is `-mean(s2)`.
    pub fn selects_on_head(&self) -> bool {
        self.efron_weight == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub efron: f64,
    pub rank: f64,
    pub penalty: f64,
    pub total: f64,
    pub validation_cindex: f64,
    /// Batches without an event (no partial-likelihood signal).
    pub skipped_efron_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 if none completed.
    pub chosen_epoch: usize,
    pub best_validation_cindex: Option<f64>,
    pub aborted: Option<String>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,efron,rank,penalty,total,validation_cindex,skipped_efron_batches,chosen\n",
        );
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.epoch,
                e.efron,
                e.rank,
                e.penalty,
                e.total,
                e.validation_cindex,
                e.skipped_efron_batches,
                u8::from(e.epoch == self.chosen_epoch)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| SurvError::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| SurvError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: NetworkState,
    pub history: TrainHistory,
}

/// Risk scores used for model selection: `s1`, or `-mean(s2)` for a
/// ranking-only model.
pub(crate) fn selection_scores(s1: &Array1<f64>, s2: &Array2<f64>, on_head: bool) -> Vec<f64> {
    if on_head {
        s2.mean_axis(Axis(1))
            .expect("horizon > 0")
            .iter()
            .map(|v| -v)
            .collect()
    } else {
        s1.to_vec()
    }
}

/// Splits a shuffled order into batches, folding a trailing singleton into
/// the previous batch so every batch has at least two records.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().map_or(false, |b| b.len() < 2) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("non-empty") = &order[start..];
    }
    out
}

/// Mini-batch training with early stopping on validation C-index.
///
/// Batches are reshuffled every epoch from `config.seed`; parameters from the
/// best validation epoch are returned. A numeric failure stops training and
/// is reported in the history along with the best state reached so far.
pub fn train(
    architecture: &Architecture,
    config: &TrainConfig,
    train_set: &SurvivalDataset,
    validation: &SurvivalDataset,
) -> Result<TrainOutcome> {
    config.validate()?;
    architecture.validate()?;
    if architecture.input_dim != train_set.n_features()
        || validation.n_features() != train_set.n_features()
    {
        return Err(SurvError::invalid(format!(
            "network input {} but data has {} features",
            architecture.input_dim,
            train_set.n_features()
        )));
    }
    if architecture.horizon != train_set.horizon() {
        return Err(SurvError::invalid(format!(
            "network horizon {} but data horizon {}",
            architecture.horizon,
            train_set.horizon()
        )));
    }
    if train_set.len() < 2 {
        return Err(SurvError::invalid("training needs at least two records"));
    }
    // A validation set without admissible pairs cannot drive early stopping.
    concordance_index(
        validation.times(),
        validation.events(),
        &vec![0.0; validation.len()],
    )?;

    let labels = survival_labels(train_set)?;
    let weights = LossWeights {
        efron: config.efron_weight,
        rank: config.lambda_rank,
        l1: config.l1,
        l2: config.l2,
        s1_mode: architecture.s1_mode,
        orientation: config.orientation,
    };
    let mut state = NetworkState::new(architecture.clone(), config.seed)?;
    let mut adam = Adam::new(config.learning_rate, state.params.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let mut history = TrainHistory::default();
    let mut best = state.clone();
    let mut best_c = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut record = EpochRecord {
            epoch,
            efron: 0.0,
            rank: 0.0,
            penalty: 0.0,
            total: 0.0,
            validation_cindex: f64::NAN,
            skipped_efron_batches: 0,
        };
        let mut efron_batches = 0usize;
        let batch_list = batches(&order, config.batch_size);
        for idx in &batch_list {
            let x = train_set.features().select(Axis(0), idx);
            let times: Vec<f64> = idx.iter().map(|&i| train_set.times()[i]).collect();
            let events: Vec<bool> = idx.iter().map(|&i| train_set.events()[i]).collect();
            let batch_labels = labels.select_rows(idx);
            let step = (|| -> Result<super::LossBreakdown> {
                let cache = state.forward(x.view(), true, &mut dropout_rng)?;
                let targets = BatchTargets {
                    times: &times,
                    events: &events,
                    labels: &batch_labels,
                };
                let (parts, g1, g2) = combined_loss(
                    cache.s1.as_slice().expect("contiguous"),
                    cache.s2.view(),
                    &targets,
                    &state.params,
                    &weights,
                    None,
                )?;
                if !parts.total.is_finite() {
                    return Err(SurvError::numeric(format!(
                        "non-finite training loss in epoch {epoch}"
                    )));
                }
                let mut grads = state.backward(&cache, &g1, g2.view())?;
                penalty(&state.params, config.l1, config.l2, Some(&mut grads));
                clip_gradients(&mut grads, config.clip_norm)?;
                adam.step(&mut state.params, &grads)?;
                state.update_running_stats(&cache);
                Ok(parts)
            })();
            match step {
                Ok(parts) => {
                    if parts.efron_skipped {
                        record.skipped_efron_batches += 1;
                    } else {
                        efron_batches += 1;
                        record.efron += parts.efron;
                    }
                    record.rank += parts.rank;
                    record.penalty += parts.penalty;
                    record.total += parts.total;
                }
                Err(e) if e.is_numeric() => {
                    history.aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let nb = batch_list.len() as f64;
        record.efron /= efron_batches.max(1) as f64;
        record.rank /= nb;
        record.penalty /= nb;
        record.total /= nb;

        let c = match state.predict(validation.features().view()) {
            Ok((s1, s2)) => concordance_index(
                validation.times(),
                validation.events(),
                &selection_scores(&s1, &s2, config.selects_on_head()),
            )?,
            Err(e) if e.is_numeric() => {
                history.aborted = Some(format!("epoch {epoch} validation: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        record.validation_cindex = c;
        history.epochs.push(record);
        log::debug!("epoch {epoch}: loss {:.5} val C {:.4}", record.total, c);
        if c > best_c {
            best_c = c;
            best = state.clone();
            history.chosen_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    if history.chosen_epoch > 0 {
        history.best_validation_cindex = Some(best_c);
    }
    Ok(TrainOutcome {
        state: best,
        history,
    })
}
