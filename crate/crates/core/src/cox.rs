//! Linear Cox proportional-hazards baseline fitted on the Efron partial
//! likelihood by damped Newton iterations.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::efron::{efron_with_index, RiskSetIndex};
use crate::error::{Result, SurvError};
use crate::survival::SurvivalDataset;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxOptions {
    /// Convergence threshold on the gradient max-norm.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Ridge penalty `l2·‖θ‖²` added to the negative log-likelihood.
    pub l2: f64,
    /// Fits with `‖θ‖∞` beyond this bound are reported as diverged.
    pub theta_bound: f64,
    /// Coefficients pinned at zero.
    #[serde(default)]
    pub frozen: Vec<usize>,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            tolerance: 1e-8,
            max_iters: 100,
            l2: 0.0,
            theta_bound: 100.0,
            frozen: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub feature_names: Vec<String>,
    pub theta: Vec<f64>,
    pub final_nll: f64,
    pub gradient_max_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub l2_penalty: f64,
    /// Objective after each accepted step, starting at θ = 0.
    pub nll_trace: Vec<f64>,
    pub status: String,
}

/// Efron partial likelihood of one dataset with cached risk-set structure.
pub struct CoxObjective<'a> {
    x: ArrayView2<'a, f64>,
    events: &'a [bool],
    index: RiskSetIndex,
    l2: f64,
}

impl<'a> CoxObjective<'a> {
    pub fn new(dataset: &'a SurvivalDataset, l2: f64) -> Result<Self> {
        if !(l2 >= 0.0) {
            return Err(SurvError::invalid(format!("l2 penalty must be ≥ 0, got {l2}")));
        }
        let index = RiskSetIndex::new(dataset.times(), dataset.events())?;
        if index.n_events() == 0 {
            return Err(SurvError::invalid(
                "Cox partial likelihood needs at least one uncensored record",
            ));
        }
        Ok(CoxObjective {
            x: dataset.features().view(),
            events: dataset.events(),
            index,
            l2,
        })
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.x.ncols() {
            return Err(SurvError::invalid(format!(
                "θ has {} entries for {} features",
                theta.len(),
                self.x.ncols()
            )));
        }
        Ok(())
    }

    fn linear_predictor(&self, theta: &[f64]) -> Vec<f64> {
        self.x.dot(&ArrayView1::from(theta)).to_vec()
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.value_grad(theta)?.0)
    }

    pub fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_theta(theta)?;
        let eta = self.linear_predictor(theta);
        let (nll, grad_eta) = efron_with_index(&self.index, &eta, self.events)?
            .expect("event count checked at construction");
        let grad_eta = Array1::from(grad_eta);
        let mut grad = self.x.t().dot(&grad_eta).to_vec();
        let mut penalty = 0.0;
        for (g, &th) in grad.iter_mut().zip(theta) {
            penalty += th * th;
            *g += 2.0 * self.l2 * th;
        }
        Ok((nll + self.l2 * penalty, grad))
    }

    /// Hessian of the penalised objective.
    pub fn hessian(&self, theta: &[f64]) -> Result<Array2<f64>> {
        Ok(self.hessian_with_scale(theta)?.0)
    }

    /// Hessian plus the magnitude of the uncancelled second-moment terms,
    /// which bounds the rounding noise left in the Hessian entries.
    fn hessian_with_scale(&self, theta: &[f64]) -> Result<(Array2<f64>, f64)> {
        self.check_theta(theta)?;
        let p = self.x.ncols();
        let eta = self.linear_predictor(theta);
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = eta.iter().map(|&v| (v - shift).exp()).collect();

        let mut hess = Array2::<f64>::zeros((p, p));
        let mut scale = 0.0;
        let mut r0 = 0.0;
        let mut r1 = Array1::<f64>::zeros(p);
        let mut r2 = Array2::<f64>::zeros((p, p));
        let accumulate = |idx: &[usize], s0: &mut f64, s1: &mut Array1<f64>, s2: &mut Array2<f64>| {
            for &i in idx {
                let xi = self.x.row(i);
                *s0 += w[i];
                s1.scaled_add(w[i], &xi);
                for a in 0..p {
                    let wa = w[i] * xi[a];
                    if wa == 0.0 {
                        continue;
                    }
                    for b in 0..p {
                        s2[[a, b]] += wa * xi[b];
                    }
                }
            }
        };
        for (members, tied) in self.index.groups_descending(self.events) {
            accumulate(members, &mut r0, &mut r1, &mut r2);
            if tied.is_empty() {
                continue;
            }
            let mut h0 = 0.0;
            let mut h1 = Array1::<f64>::zeros(p);
            let mut h2 = Array2::<f64>::zeros((p, p));
            accumulate(tied, &mut h0, &mut h1, &mut h2);
            let m = tied.len() as f64;
            for l in 0..tied.len() {
                let frac = l as f64 / m;
                let d = r0 - frac * h0;
                let s1 = &r1 - &(&h1 * frac);
                let s2 = &r2 - &(&h2 * frac);
                for a in 0..p {
                    scale += s2[[a, a]] / d;
                    for b in 0..p {
                        hess[[a, b]] += s2[[a, b]] / d - s1[a] * s1[b] / (d * d);
                    }
                }
            }
        }
        for a in 0..p {
            hess[[a, a]] += 2.0 * self.l2;
        }
        if hess.iter().any(|v| !v.is_finite()) {
            return Err(SurvError::numeric("Cox Hessian overflowed"));
        }
        Ok((hess, scale))
    }
}

/// Negative Efron log partial likelihood of `θ` (plus `l2·‖θ‖²`).
pub fn efron_nll(theta: &[f64], dataset: &SurvivalDataset, l2: f64) -> Result<f64> {
    CoxObjective::new(dataset, l2)?.value(theta)
}

pub fn efron_nll_grad(theta: &[f64], dataset: &SurvivalDataset, l2: f64) -> Result<Vec<f64>> {
    Ok(CoxObjective::new(dataset, l2)?.value_grad(theta)?.1)
}

/// Newton direction `-H⁻¹g` restricted to the free coordinates.
///
/// Falls back to a pseudo-inverse over the non-null eigenspace when the
/// Hessian is singular (collinear one-hot blocks, constant columns).
fn newton_direction(
    hess: &Array2<f64>,
    noise_scale: f64,
    grad: &[f64],
    free: &[usize],
) -> Option<Vec<f64>> {
    let k = free.len();
    let h = DMatrix::from_fn(k, k, |a, b| hess[[free[a], free[b]]]);
    let g = DVector::from_iterator(k, free.iter().map(|&i| grad[i]));
    let floor = 1e-12 * noise_scale;
    let step = match h.clone().cholesky() {
        Some(chol)
            if chol.l().diagonal().min() > 1e-4 * chol.l().diagonal().max()
                && chol.l().diagonal().min().powi(2) > floor =>
        {
            chol.solve(&(-&g))
        }
        _ => {
            let eig = h.symmetric_eigen();
            let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
            let cutoff = (max_ev * 1e-10).max(floor);
            if !(max_ev > cutoff) {
                return None;
            }
            let proj = eig.eigenvectors.transpose() * &g;
            let scaled = DVector::from_iterator(
                k,
                proj.iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(&c, &ev)| if ev > cutoff { -c / ev } else { 0.0 }),
            );
            eig.eigenvectors * scaled
        }
    };
    if step.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut full = vec![0.0; grad.len()];
    for (a, &i) in free.iter().enumerate() {
        full[i] = step[a];
    }
    Some(full)
}

fn max_norm(v: &[f64], free: &[usize]) -> f64 {
    free.iter().map(|&i| v[i].abs()).fold(0.0, f64::max)
}

/// Fits θ by Newton iterations with step-halving line search.
///
/// Convergence is declared when the gradient max-norm over the free
/// coordinates drops below `tolerance` and the remaining Newton step is
/// negligible, or when the Newton step's predicted decrease is below the
/// resolution of the objective itself; a vanishing gradient with a persistent step signals a
/// monotone likelihood whose maximiser is at infinity.
pub fn fit_cox(dataset: &SurvivalDataset, options: &CoxOptions) -> Result<CoxModel> {
    let objective = CoxObjective::new(dataset, options.l2)?;
    let p = dataset.n_features();
    if let Some(&bad) = options.frozen.iter().find(|&&i| i >= p) {
        return Err(SurvError::invalid(format!("frozen index {bad} out of range")));
    }
    let free: Vec<usize> = (0..p).filter(|i| !options.frozen.contains(i)).collect();

    let mut theta = vec![0.0; p];
    let (mut nll, mut grad) = objective.value_grad(&theta)?;
    let mut trace = vec![nll];
    let mut converged = false;
    let mut status = String::from("iteration limit reached");
    let mut iterations = 0;

    while iterations < options.max_iters {
        let g_norm = max_norm(&grad, &free);
        let (hess, noise_scale) = objective.hessian_with_scale(&theta)?;
        let newton = newton_direction(&hess, noise_scale, &grad, &free);
        let theta_scale = max_norm(&theta, &free).max(1.0);
        let step_norm = newton.as_ref().map_or(0.0, |d| max_norm(d, &free));
        // Predicted decrease of a full Newton step, against what the
        // objective can still resolve in floating point.
        let decrement = newton
            .as_ref()
            .map_or(f64::INFINITY, |d| -d.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>());
        let resolvable = 64.0 * f64::EPSILON * nll.abs().max(1.0);
        if g_norm > options.tolerance
            && decrement.abs() <= resolvable
            && step_norm <= 1e-4 * theta_scale
        {
            converged = true;
            status = String::from("converged (objective stationary to machine precision)");
            break;
        }
        if g_norm <= options.tolerance {
            if step_norm <= 1e-4 * theta_scale {
                converged = true;
                status = String::from("converged");
            } else {
                status = String::from("monotone likelihood: gradient vanished while θ keeps growing");
            }
            break;
        }
        iterations += 1;

        let descent = |d: &[f64]| d.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() < 0.0;
        let direction = match newton {
            Some(d) if descent(&d) => d,
            _ => {
                log::debug!("Newton direction unusable, taking a gradient step");
                let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut d = vec![0.0; p];
                for &i in &free {
                    d[i] = -grad[i] / gn;
                }
                d
            }
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&direction)
                .map(|(t, d)| t + step * d)
                .collect();
            if let Ok((c_nll, c_grad)) = objective.value_grad(&candidate) {
                if c_nll <= nll {
                    accepted = Some((candidate, c_nll, c_grad));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, next_nll, next_grad)) = accepted else {
            status = String::from("line search failed to decrease the objective");
            break;
        };
        theta = next;
        nll = next_nll;
        grad = next_grad;
        trace.push(nll);

        if options.l2 == 0.0 && max_norm(&theta, &free) > options.theta_bound {
            status = format!(
                "monotone likelihood: ‖θ‖∞ exceeded bound {}",
                options.theta_bound
            );
            break;
        }
    }

    Ok(CoxModel {
        feature_names: dataset.feature_names().to_vec(),
        gradient_max_norm: max_norm(&grad, &free),
        theta,
        final_nll: nll,
        iterations,
        converged,
        l2_penalty: options.l2,
        nll_trace: trace,
        status,
    })
}

impl CoxModel {
    /// Linear predictor `θ·x`; higher means earlier expected event.
    pub fn predict_risk(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.theta.len() {
            return Err(SurvError::invalid(format!(
                "{} features for a model with {} coefficients",
                features.len(),
                self.theta.len()
            )));
        }
        Ok(features.iter().zip(&self.theta).map(|(x, t)| x * t).sum())
    }

    pub fn predict_risks(&self, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.theta.len() {
            return Err(SurvError::invalid(format!(
                "{} feature columns for a model with {} coefficients",
                features.ncols(),
                self.theta.len()
            )));
        }
        Ok(features.dot(&ArrayView1::from(&self.theta[..])).to_vec())
    }

    /// Coefficients keyed by feature name.
    pub fn coefficients(&self) -> BTreeMap<&str, f64> {
        self.feature_names
            .iter()
            .map(String::as_str)
            .zip(self.theta.iter().copied())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| SurvError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SurvError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
