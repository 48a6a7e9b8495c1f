//! Feed-forward survival network with two outputs.
//!
//! Hidden layers (dense → optional batch norm → activation → dropout) feed a
//! single linear unit `s1`, used as a log-hazard or hazard score, and a
//! `T`-unit sigmoid head `s2 = σ(s1·w + b)` giving one survival probability
//! per time unit. Gradients are derived by hand for this fixed shape.

mod loss;
mod optim;
mod train;

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

pub use loss::{
    combined_loss, efron_batch_loss, penalty, BatchTargets, ranking_loss, LossBreakdown, LossWeights,
    RankOrientation, RankingLoss,
};
pub use optim::{clip_gradients, Adam};
pub use train::{train, EpochRecord, TrainConfig, TrainHistory, TrainOutcome};

pub const PARAMS_VERSION: u32 = 1;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// How the bottleneck output enters the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum S1Mode {
    /// `s = exp(s1)`.
    #[default]
    LogHazard,
    /// `s = softplus(s1) + 1e-8`.
    Hazard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub batch_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<HiddenLayer>,
    /// Number of survival-head units, one per time unit.
    pub horizon: usize,
    #[serde(default)]
    pub s1_mode: S1Mode,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.horizon == 0 {
            return Err(SurvError::invalid("input_dim and horizon must be positive"));
        }
        for (k, h) in self.hidden.iter().enumerate() {
            if h.width == 0 {
                return Err(SurvError::invalid(format!("hidden layer {k} has width 0")));
            }
            if !(0.0..1.0).contains(&h.dropout) {
                return Err(SurvError::invalid(format!(
                    "hidden layer {k}: dropout {} outside [0, 1)",
                    h.dropout
                )));
            }
        }
        Ok(())
    }
}

/// `y = x·weight + bias`, weight stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn uniform(n_in: usize, n_out: usize, limit: f64, rng: &mut ChaCha8Rng) -> Self {
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite init limit");
        Dense {
            weight: Array2::from_shape_simple_fn((n_in, n_out), || dist.sample(rng)),
            bias: Array1::zeros(n_out),
        }
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenParams {
    pub dense: Dense,
    pub norm: Option<BatchNorm>,
}

/// Trainable tensors; the same shape doubles as a gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub hidden: Vec<HiddenParams>,
    pub bottleneck: Dense,
    pub head: Dense,
}

impl Params {
    /// All tensors in a fixed order; the flag marks dense weights, the only
    /// tensors subject to L1/L2 penalties.
    pub fn tensors(&self) -> Vec<(&[f64], bool)> {
        let mut out = Vec::new();
        for h in &self.hidden {
            out.push((slice(&h.dense.weight), true));
            out.push((h.dense.bias.as_slice().expect("contiguous"), false));
            if let Some(n) = &h.norm {
                out.push((n.gamma.as_slice().expect("contiguous"), false));
                out.push((n.beta.as_slice().expect("contiguous"), false));
            }
        }
        for d in [&self.bottleneck, &self.head] {
            out.push((slice(&d.weight), true));
            out.push((d.bias.as_slice().expect("contiguous"), false));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        let mut out = Vec::new();
        for h in &mut self.hidden {
            out.push((slice_mut(&mut h.dense.weight), true));
            out.push((h.dense.bias.as_slice_mut().expect("contiguous"), false));
            if let Some(n) = &mut h.norm {
                out.push((n.gamma.as_slice_mut().expect("contiguous"), false));
                out.push((n.beta.as_slice_mut().expect("contiguous"), false));
            }
        }
        for d in [&mut self.bottleneck, &mut self.head] {
            out.push((slice_mut(&mut d.weight), true));
            out.push((d.bias.as_slice_mut().expect("contiguous"), false));
        }
        out
    }

    pub fn zeros_like(&self) -> Params {
        let mut z = self.clone();
        for (t, _) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(t, _)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(t, _)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(SurvError::invalid(format!(
                "{} values for {} parameters",
                values.len(),
                self.len()
            )));
        }
        let mut k = 0;
        for (t, _) in self.tensors_mut() {
            t.copy_from_slice(&values[k..k + t.len()]);
            k += t.len();
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(t, _)| t.iter().all(|v| v.is_finite()))
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub architecture: Architecture,
    pub params: Params,
    /// Batch-norm running statistics, one entry per hidden layer.
    pub running: Vec<Option<RunningStats>>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    xhat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    batch_mean: Option<Array1<f64>>,
    batch_var: Option<Array1<f64>>,
    act: Array2<f64>,
    dropout: Option<Array2<f64>>,
}

/// Intermediate values of one forward pass, consumed by [`NetworkState::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    bottleneck_input: Array2<f64>,
    train_mode: bool,
    pub s1: Array1<f64>,
    pub s2: Array2<f64>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.s1.len()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl NetworkState {
    /// Random initialisation: He-uniform for ReLU layers, Glorot-uniform
    /// elsewhere, zero biases, identity batch norm.
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hidden = Vec::new();
        let mut running = Vec::new();
        let mut n_in = architecture.input_dim;
        for h in &architecture.hidden {
            let limit = match h.activation {
                Activation::Relu => (6.0 / n_in as f64).sqrt(),
                Activation::Tanh => (6.0 / (n_in + h.width) as f64).sqrt(),
            };
            let norm = h.batch_norm.then(|| BatchNorm {
                gamma: Array1::ones(h.width),
                beta: Array1::zeros(h.width),
            });
            running.push(h.batch_norm.then(|| RunningStats {
                mean: Array1::zeros(h.width),
                var: Array1::ones(h.width),
            }));
            hidden.push(HiddenParams {
                dense: Dense::uniform(n_in, h.width, limit, &mut rng),
                norm,
            });
            n_in = h.width;
        }
        let bottleneck = Dense::uniform(n_in, 1, (6.0 / (n_in + 1) as f64).sqrt(), &mut rng);
        let t = architecture.horizon;
        let head = Dense::uniform(1, t, (6.0 / (1 + t) as f64).sqrt(), &mut rng);
        Ok(NetworkState {
            params: Params {
                hidden,
                bottleneck,
                head,
            },
            running,
            architecture,
        })
    }

    /// A network whose every parameter is zero (batch-norm scales included).
    pub fn zeros(architecture: Architecture) -> Result<Self> {
        let mut state = Self::new(architecture, 0)?;
        state.params = state.params.zeros_like();
        Ok(state)
    }

    pub fn input_dim(&self) -> usize {
        self.architecture.input_dim
    }

    pub fn horizon(&self) -> usize {
        self.architecture.horizon
    }

    /// Samples inverted-dropout masks (entries 0 or `1/(1-p)`) for a batch.
    pub fn sample_dropout_masks<R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Vec<Option<Array2<f64>>> {
        self.architecture
            .hidden
            .iter()
            .map(|h| {
                (h.dropout > 0.0).then(|| {
                    let keep = 1.0 / (1.0 - h.dropout);
                    Array2::from_shape_simple_fn((batch, h.width), || {
                        if rng.random::<f64>() < h.dropout {
                            0.0
                        } else {
                            keep
                        }
                    })
                })
            })
            .collect()
    }

    /// In train mode dropout masks come from `rng` and batch norm uses batch
    /// statistics; in eval mode running statistics and no dropout.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<'_, f64>,
        train_mode: bool,
        rng: &mut R,
    ) -> Result<ForwardCache> {
        let masks = if train_mode {
            self.sample_dropout_masks(x.nrows(), rng)
        } else {
            Vec::new()
        };
        self.forward_with_masks(x, train_mode, &masks)
    }

    /// Forward pass with explicit dropout masks (empty slice for none).
    pub fn forward_with_masks(
        &self,
        x: ArrayView2<'_, f64>,
        train_mode: bool,
        masks: &[Option<Array2<f64>>],
    ) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(SurvError::invalid(format!(
                "batch has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.nrows() == 0 {
            return Err(SurvError::invalid("empty batch"));
        }
        let mut current = x.to_owned();
        let mut layers = Vec::with_capacity(self.params.hidden.len());
        for (k, (layer, spec)) in self
            .params
            .hidden
            .iter()
            .zip(&self.architecture.hidden)
            .enumerate()
        {
            let z = layer.dense.apply(current.view());
            let mut cache = LayerCache {
                input: current,
                xhat: None,
                inv_std: None,
                batch_mean: None,
                batch_var: None,
                act: Array2::zeros((0, 0)),
                dropout: None,
            };
            let y = match &layer.norm {
                None => z,
                Some(norm) => {
                    let (mean, var) = if train_mode {
                        let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                        let var = (&z - &mean).mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
                        cache.batch_mean = Some(mean.clone());
                        cache.batch_var = Some(var.clone());
                        (mean, var)
                    } else {
                        let rs = self.running[k].as_ref().ok_or_else(|| {
                            SurvError::invalid(format!("layer {k} lacks running statistics"))
                        })?;
                        (rs.mean.clone(), rs.var.clone())
                    };
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let xhat = (&z - &mean) * &inv_std;
                    let y = &xhat * &norm.gamma + &norm.beta;
                    cache.xhat = Some(xhat);
                    cache.inv_std = Some(inv_std);
                    y
                }
            };
            let act = match spec.activation {
                Activation::Relu => y.mapv(|v| v.max(0.0)),
                Activation::Tanh => y.mapv(f64::tanh),
            };
            let out = match masks.get(k).and_then(Option::as_ref) {
                Some(m) if train_mode => {
                    if m.dim() != act.dim() {
                        return Err(SurvError::invalid(format!(
                            "dropout mask for layer {k} has shape {:?}, expected {:?}",
                            m.dim(),
                            act.dim()
                        )));
                    }
                    cache.dropout = Some(m.clone());
                    &act * m
                }
                _ => act.clone(),
            };
            if out.iter().any(|v| !v.is_finite()) {
                return Err(SurvError::numeric(format!(
                    "non-finite activation in hidden layer {k}"
                )));
            }
            cache.act = act;
            layers.push(cache);
            current = out;
        }
        let n_hidden = layers.len();
        let s1 = self.params.bottleneck.apply(current.view()).column(0).to_owned();
        if s1.iter().any(|v| !v.is_finite()) {
            return Err(SurvError::numeric(format!(
                "non-finite activation in layer {n_hidden} (bottleneck)"
            )));
        }
        let logits = s1
            .view()
            .insert_axis(Axis(1))
            .dot(&self.params.head.weight)
            + &self.params.head.bias;
        let s2 = logits.mapv(sigmoid);
        if s2.iter().any(|v| !v.is_finite()) {
            return Err(SurvError::numeric(format!(
                "non-finite activation in layer {} (survival head)",
                n_hidden + 1
            )));
        }
        Ok(ForwardCache {
            layers,
            bottleneck_input: current,
            train_mode,
            s1,
            s2,
        })
    }

    /// Reverse pass from upstream gradients on `s1` and `s2`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_s1: &[f64],
        grad_s2: ArrayView2<'_, f64>,
    ) -> Result<Params> {
        let b = cache.batch_size();
        if grad_s1.len() != b
            || grad_s2.dim() != (b, self.horizon())
            || cache.layers.len() != self.params.hidden.len()
            || cache.s2.ncols() != self.horizon()
        {
            return Err(SurvError::invalid(
                "upstream gradients do not match the cached forward pass",
            ));
        }
        let mut grads = self.params.zeros_like();

        // Survival head.
        let dz2 = &grad_s2 * &cache.s2.mapv(|s| s * (1.0 - s));
        let s1_col = cache.s1.view().insert_axis(Axis(1));
        grads.head.weight = s1_col.t().dot(&dz2);
        grads.head.bias = dz2.sum_axis(Axis(0));
        let mut ds1 = Array1::from(grad_s1.to_vec());
        ds1 += &dz2.dot(&self.params.head.weight.row(0));

        // Bottleneck.
        let ds1_col = ds1.view().insert_axis(Axis(1));
        grads.bottleneck.weight = cache.bottleneck_input.t().dot(&ds1_col);
        grads.bottleneck.bias = Array1::from_elem(1, ds1.sum());
        let mut upstream = ds1_col.dot(&self.params.bottleneck.weight.t());

        for k in (0..cache.layers.len()).rev() {
            let lc = &cache.layers[k];
            let layer = &self.params.hidden[k];
            let spec = &self.architecture.hidden[k];
            if let Some(m) = &lc.dropout {
                upstream = upstream * m;
            }
            let dy = match spec.activation {
                Activation::Relu => {
                    let mut d = upstream;
                    ndarray::Zip::from(&mut d)
                        .and(&lc.act)
                        .for_each(|g, &a| {
                            if a <= 0.0 {
                                *g = 0.0;
                            }
                        });
                    d
                }
                Activation::Tanh => upstream * &lc.act.mapv(|a| 1.0 - a * a),
            };
            let dz = match (&layer.norm, &lc.xhat, &lc.inv_std) {
                (Some(norm), Some(xhat), Some(inv_std)) => {
                    let g = grads.hidden[k].norm.as_mut().expect("mirrors params");
                    g.gamma = (&dy * xhat).sum_axis(Axis(0));
                    g.beta = dy.sum_axis(Axis(0));
                    let dxhat = &dy * &norm.gamma;
                    if cache.train_mode {
                        let n = b as f64;
                        let sum_dxhat = dxhat.sum_axis(Axis(0));
                        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                        ((&dxhat * n - &sum_dxhat) - xhat * &sum_dxhat_xhat) * inv_std / n
                    } else {
                        dxhat * inv_std
                    }
                }
                (None, _, _) => dy,
                _ => return Err(SurvError::invalid("batch-norm cache missing")),
            };
            grads.hidden[k].dense.weight = lc.input.t().dot(&dz);
            grads.hidden[k].dense.bias = dz.sum_axis(Axis(0));
            if k > 0 {
                upstream = dz.dot(&layer.dense.weight.t());
            } else {
                upstream = Array2::zeros((0, 0));
            }
        }
        drop(upstream);
        // `t().dot` results can come back in Fortran order; keep flat views valid.
        for h in &mut grads.hidden {
            h.dense.weight = h.dense.weight.as_standard_layout().into_owned();
        }
        grads.bottleneck.weight = grads.bottleneck.weight.as_standard_layout().into_owned();
        grads.head.weight = grads.head.weight.as_standard_layout().into_owned();
        Ok(grads)
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates (exponential moving average, momentum 0.9).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if !cache.train_mode {
            return;
        }
        for (rs, lc) in self.running.iter_mut().zip(&cache.layers) {
            if let (Some(rs), Some(m), Some(v)) = (rs, &lc.batch_mean, &lc.batch_var) {
                rs.mean = &rs.mean * BN_MOMENTUM + m * (1.0 - BN_MOMENTUM);
                rs.var = &rs.var * BN_MOMENTUM + v * (1.0 - BN_MOMENTUM);
            }
        }
    }

    /// Eval-mode scores: `s1` per record and the `records × T` survival matrix.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let cache = self.forward_with_masks(features, false, &[])?;
        Ok((cache.s1, cache.s2))
    }

    pub fn predict_one(&self, features: &[f64]) -> Result<(f64, Array1<f64>)> {
        let x = ArrayView2::from_shape((1, features.len()), features)
            .map_err(|e| SurvError::invalid(e.to_string()))?;
        let (s1, s2) = self.predict(x)?;
        Ok((s1[0], s2.row(0).to_owned()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = SavedNetwork {
            version: PARAMS_VERSION,
            state: self.clone(),
        };
        std::fs::write(path, serde_json::to_string(&doc)? + "\n").map_err(|e| SurvError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SurvError::io(path, e))?;
        let doc: SavedNetwork = serde_json::from_str(&text)?;
        if doc.version != PARAMS_VERSION {
            return Err(SurvError::Schema {
                path: path.to_path_buf(),
                msg: format!("unsupported network version {}", doc.version),
            });
        }
        doc.state.architecture.validate()?;
        if !doc.state.params.all_finite() {
            return Err(SurvError::Schema {
                path: path.to_path_buf(),
                msg: "non-finite parameter".into(),
            });
        }
        Ok(doc.state)
    }
}

#[derive(Serialize, Deserialize)]
struct SavedNetwork {
    version: u32,
    #[serde(flatten)]
    state: NetworkState,
}

/// Fraction of adjacent threshold pairs where the survival head increases
/// (`s2[t+1] > s2[t]`). Monotonicity is not enforced during training.
pub fn monotonicity_violation_rate(s2: ArrayView2<'_, f64>) -> f64 {
    let t = s2.ncols();
    if t < 2 || s2.nrows() == 0 {
        return 0.0;
    }
    let violations: usize = s2
        .rows()
        .into_iter()
        .map(|r| r.windows(2).into_iter().filter(|w| w[1] > w[0]).count())
        .sum();
    violations as f64 / (s2.nrows() * (t - 1)) as f64
}
