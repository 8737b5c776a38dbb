use serde::{Deserialize, Serialize};

use super::network::{Gradients, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// One bias-corrected Adam step on a flat tensor; `step` counts from 1.
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], cfg: &AdamConfig, step: u64) {
    debug_assert!(step >= 1);
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
    }
}

/// Optimizer state for a whole network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &NetworkModel) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Adam {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut NetworkModel, grads: &Gradients) {
        self.step += 1;
        for (i, p) in model.params_mut().into_iter().enumerate() {
            adam_update(
                p,
                &grads.tensors[i],
                &mut self.m[i],
                &mut self.v[i],
                &self.config,
                self.step,
            );
        }
    }
}
