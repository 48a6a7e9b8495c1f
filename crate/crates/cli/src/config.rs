//! Experiment configuration files and the random-search space.

use std::path::{Path, PathBuf};

use mtsurv::analysis::VimpConfig;
use mtsurv::cox::CoxOptions;
use mtsurv::dataio::SplitFractions;
use mtsurv::net::{Activation, Architecture, HiddenLayer, S1Mode, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Cox,
    MlpEfron,
    MlpRank,
    MlpEfronRank,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cox => "cox",
            ModelKind::MlpEfron => "mlp-efron",
            ModelKind::MlpRank => "mlp-rank",
            ModelKind::MlpEfronRank => "mlp-efron-rank",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ModelKind::Cox,
            ModelKind::MlpEfron,
            ModelKind::MlpRank,
            ModelKind::MlpEfronRank,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn is_network(self) -> bool {
        self != ModelKind::Cox
    }

    /// Sets the loss weights this kind disables.
    pub fn apply(self, train: &mut TrainConfig) {
        match self {
            ModelKind::MlpEfron => train.lambda_rank = 0.0,
            ModelKind::MlpRank => {
                train.efron_weight = 0.0;
                if train.lambda_rank == 0.0 {
                    train.lambda_rank = 1.0;
                }
            }
            ModelKind::MlpEfronRank => {
                if train.efron_weight == 0.0 {
                    train.efron_weight = 1.0;
                }
            }
            ModelKind::Cox => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxSettings {
    pub l2: f64,
    /// Ridge penalty for a refit when the unpenalised fit does not converge.
    pub l2_fallback: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for CoxSettings {
    fn default() -> Self {
        let base = CoxOptions::default();
        CoxSettings {
            l2: 0.0,
            l2_fallback: 1e-3,
            tolerance: base.tolerance,
            max_iters: base.max_iters,
        }
    }
}

impl CoxSettings {
    pub fn options(&self, l2: f64) -> CoxOptions {
        CoxOptions {
            tolerance: self.tolerance,
            max_iters: self.max_iters,
            l2,
            ..CoxOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset spec, relative to the config file.
    pub spec: PathBuf,
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
    /// Number of split seeds, `seed..seed + splits`.
    #[serde(default = "one")]
    pub splits: usize,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<HiddenLayer>,
    #[serde(default)]
    pub s1_mode: S1Mode,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub cox: CoxSettings,
    #[serde(default)]
    pub vimp: VimpConfig,
    #[serde(default)]
    pub search: SearchSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_hidden() -> Vec<HiddenLayer> {
    vec![HiddenLayer {
        width: 32,
        activation: Activation::Relu,
        dropout: 0.1,
        batch_norm: true,
    }]
}

impl ExperimentConfig {
    pub fn new(spec: PathBuf, model: ModelKind) -> Self {
        ExperimentConfig {
            spec,
            model,
            seed: 0,
            splits: 1,
            split: SplitFractions::default(),
            hidden: default_hidden(),
            s1_mode: S1Mode::default(),
            train: TrainConfig::default(),
            cox: CoxSettings::default(),
            vimp: VimpConfig::default(),
            search: SearchSpace::default(),
            out: None,
            base_dir: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spec_path(&self) -> PathBuf {
        match &self.base_dir {
            Some(dir) if self.spec.is_relative() => dir.join(&self.spec),
            _ => self.spec.clone(),
        }
    }

    /// Training settings with the model kind's loss weights applied.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        self.model.apply(&mut t);
        t
    }

    pub fn architecture(&self, input_dim: usize, horizon: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden: self.hidden.clone(),
            horizon,
            s1_mode: self.s1_mode,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: mtsurv::SurvError| CliError::Usage(e.to_string());
        if self.splits == 0 {
            return Err(CliError::Usage("splits must be at least 1".into()));
        }
        self.split.validate().map_err(usage)?;
        self.vimp.validate().map_err(usage)?;
        if self.model.is_network() {
            self.effective_train().validate().map_err(usage)?;
            self.architecture(1, 1).validate().map_err(usage)?;
        }
        self.search.validate()?;
        Ok(())
    }
}

/// Inclusive range for a uniform draw.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub trials: usize,
    pub master_seed: u64,
    pub depth: [usize; 2],
    pub widths: Vec<usize>,
    pub dropout: Range,
    pub batch_norm: Vec<bool>,
    pub activation: Vec<Activation>,
    /// Log-uniform.
    pub lambda_rank: Range,
    /// Log-uniform.
    pub l1: Range,
    /// Log-uniform.
    pub l2: Range,
    pub clip_norm: Range,
    /// Log-uniform.
    pub learning_rate: Range,
    pub batch_size: Vec<usize>,
    pub s1_mode: Vec<S1Mode>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            trials: 30,
            master_seed: 0,
            depth: [1, 2],
            widths: vec![16, 32, 64],
            dropout: [0.0, 0.3],
            batch_norm: vec![true, false],
            activation: vec![Activation::Relu, Activation::Tanh],
            lambda_rank: [0.1, 10.0],
            l1: [1e-7, 1e-4],
            l2: [1e-6, 1e-3],
            clip_norm: [1.0, 10.0],
            learning_rate: [1e-4, 1e-2],
            batch_size: vec![32, 64, 128],
            s1_mode: vec![S1Mode::LogHazard],
        }
    }
}

/// One configuration drawn from a [`SearchSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub hidden: Vec<HiddenLayer>,
    pub s1_mode: S1Mode,
    pub train: TrainConfig,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(format!("search: {m}")));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.depth[0] > self.depth[1] {
            return bad("depth range is empty");
        }
        if self.widths.is_empty()
            || self.batch_norm.is_empty()
            || self.activation.is_empty()
            || self.batch_size.is_empty()
            || self.s1_mode.is_empty()
        {
            return bad("choice lists must be non-empty");
        }
        if self.widths.contains(&0) {
            return bad("widths must be positive");
        }
        if self.batch_size.iter().any(|&b| b < 2) {
            return bad("batch sizes must be at least 2");
        }
        for (name, r, lo) in [
            ("lambda_rank", self.lambda_rank, f64::MIN_POSITIVE),
            ("l1", self.l1, f64::MIN_POSITIVE),
            ("l2", self.l2, f64::MIN_POSITIVE),
            ("learning_rate", self.learning_rate, f64::MIN_POSITIVE),
            ("clip_norm", self.clip_norm, f64::MIN_POSITIVE),
            ("dropout", self.dropout, 0.0),
        ] {
            if !(r[0] >= lo && r[0] <= r[1] && r[1].is_finite()) {
                return Err(CliError::Usage(format!("search: bad {name} range {r:?}")));
            }
        }
        if self.dropout[1] >= 1.0 {
            return bad("dropout must stay below 1");
        }
        Ok(())
    }

    /// Draws trial `index`. The draw depends only on the master seed and the
    /// index, never on the model kind, so kinds can be compared trial by trial.
    pub fn sample(&self, index: usize, base: &TrainConfig) -> Trial {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index as u64);
        let pick = |rng: &mut ChaCha8Rng, n: usize| rng.random_range(0..n);
        let uniform = |rng: &mut ChaCha8Rng, r: Range| {
            if r[0] == r[1] {
                r[0]
            } else {
                rng.random_range(r[0]..=r[1])
            }
        };
        let log_uniform = |rng: &mut ChaCha8Rng, r: Range| {
            let u = uniform(rng, [r[0].ln(), r[1].ln()]);
            u.exp().clamp(r[0], r[1])
        };

        let depth = rng.random_range(self.depth[0]..=self.depth[1]);
        let mut hidden = Vec::with_capacity(depth);
        for _ in 0..depth {
            let width = self.widths[pick(&mut rng, self.widths.len())];
            let activation = self.activation[pick(&mut rng, self.activation.len())];
            let dropout = uniform(&mut rng, self.dropout);
            let batch_norm = self.batch_norm[pick(&mut rng, self.batch_norm.len())];
            hidden.push(HiddenLayer {
                width,
                activation,
                dropout,
                batch_norm,
            });
        }
        let s1_mode = self.s1_mode[pick(&mut rng, self.s1_mode.len())];
        let mut train = base.clone();
        train.learning_rate = log_uniform(&mut rng, self.learning_rate);
        train.batch_size = self.batch_size[pick(&mut rng, self.batch_size.len())];
        train.lambda_rank = log_uniform(&mut rng, self.lambda_rank);
        train.l1 = log_uniform(&mut rng, self.l1);
        train.l2 = log_uniform(&mut rng, self.l2);
        train.clip_norm = uniform(&mut rng, self.clip_norm);
        // TOML integers are signed 64-bit.
        train.seed = u64::from(rng.random::<u32>());
        Trial {
            index,
            hidden,
            s1_mode,
            train,
        }
    }
}
