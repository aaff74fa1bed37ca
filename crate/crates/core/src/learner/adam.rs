use serde::{Deserialize, Serialize};

use super::grad::Gradients;
use super::params::RawParams;

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

/// One bias-corrected Adam update followed by projection onto the feasible
/// weights (see [`RawParams::project`]).
pub fn adam_step(raw: &mut RawParams, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) {
    let mut theta = raw.flatten();
    let g = grads.flatten();
    if state.m.len() != theta.len() {
        state.m = vec![0.0; theta.len()];
        state.v = vec![0.0; theta.len()];
        state.t = 0;
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..theta.len() {
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g[k];
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        theta[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    raw.unflatten(&theta);
    raw.project();
}
