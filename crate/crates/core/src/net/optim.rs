use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Result, SurvError};

/// Rescales `grads` so their global L2 norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Params, clip_norm: f64) -> Result<f64> {
    if !(clip_norm > 0.0) {
        return Err(SurvError::invalid(format!("clip_norm must be positive, got {clip_norm}")));
    }
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|(t, _)| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for (t, _) in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(norm)
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient rejects the step and leaves
    /// both the parameters and the moments untouched.
    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        if !grads.all_finite() {
            return Err(SurvError::numeric("non-finite gradient; Adam step rejected"));
        }
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(SurvError::invalid("optimizer state does not match parameter count"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut k = 0;
        for ((p, _), (g, _)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            for (pv, &gv) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gv;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gv * gv;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *pv -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
        Ok(())
    }
}
