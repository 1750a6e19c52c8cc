use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Mat;
use super::TensorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction; weight decay enters as an L2 term on the
/// gradient before the moment updates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Mat>,
    second_moment: Vec<Mat>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.values().iter().map(|p| Mat::zeros(p.dim())).collect();
        Self {
            config,
            step_count: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. Nothing is modified when a gradient is
    /// non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Mat]) -> Result<(), TensorError> {
        if grads.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(TensorError::Param(format!(
                "adam expects {} gradient buffers, got {}",
                params.len(),
                grads.len()
            )));
        }
        for ((id, g), m) in params.ids().zip(grads).zip(&self.first_moment) {
            let p = params.get(id);
            if g.dim() != p.dim() || m.dim() != p.dim() {
                return Err(TensorError::Shape {
                    op: "adam_step",
                    left: p.dim(),
                    right: g.dim(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite {
                    name: params.name(id).to_string(),
                    step: self.step_count + 1,
                });
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            weight_decay,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (((theta, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            ndarray::Zip::from(theta)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|theta, &g, m, v| {
                    let g = g + weight_decay * *theta;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                });
        }
        Ok(())
    }
}
