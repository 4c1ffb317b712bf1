use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub total_epochs: usize,
    pub adam_betas: (f64, f64),
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            learning_rate: 1e-4,
            warmup_steps: 500,
            total_epochs: 300,
            adam_betas: (0.9, 0.999),
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) {
            return Err(Error::InvalidConfig("learning_rate and adam_epsilon must be positive".into()));
        }
        if !(0.0 < b1 && b1 < 1.0 && 0.0 < b2 && b2 < 1.0) {
            return Err(Error::InvalidConfig(format!("adam betas ({b1}, {b2}) must lie in (0, 1)")));
        }
        Ok(())
    }
}

/// Linear warmup to the base rate, then cosine decay to zero at `total_steps`.
pub fn lr_schedule(cfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    let lr = cfg.learning_rate;
    if step < cfg.warmup_steps {
        return lr * step as f64 / cfg.warmup_steps as f64;
    }
    let span = total_steps.saturating_sub(cfg.warmup_steps);
    if span == 0 {
        return if step >= total_steps && total_steps > 0 { 0.0 } else { lr };
    }
    let progress = ((step - cfg.warmup_steps) as f64 / span as f64).min(1.0);
    lr * 0.5 * (1.0 + (PI * progress).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub betas: (f64, f64),
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self::with(n, cfg.adam_betas, cfg.adam_epsilon)
    }

    pub fn with(n: usize, betas: (f64, f64), epsilon: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, betas, epsilon }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length");
    assert_eq!(params.len(), state.m.len(), "optimizer state length");
    state.t += 1;
    let (b1, b2) = state.betas;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}
