//! Adaptive-moment optimizer and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::nets::NetworkParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: NetworkParams<f32>,
    pub v: NetworkParams<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams<f32>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    /// One bias-corrected update of `params` against `grads`.
    pub fn step(&mut self, cfg: &AdamConfig, lr: f64, params: &mut NetworkParams<f32>, grads: &NetworkParams<f32>) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (cfg.eps * c2.sqrt()) as f32;
        let slices = params.slices_mut().zip(grads.slices()).zip(self.m.slices_mut().zip(self.v.slices_mut()));
        for ((p, g), (m, v)) in slices {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut NetworkParams<f32>, max_norm: f64) -> f64 {
    let norm = grads.global_norm() as f64;
    if max_norm > 0.0 && norm > max_norm {
        grads.scale((max_norm / norm) as f32);
    }
    norm
}
