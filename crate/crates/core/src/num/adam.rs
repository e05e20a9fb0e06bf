use serde::{Deserialize, Serialize};

use super::{Parameterized, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with lazy updates: an entry whose gradient is exactly
/// zero keeps its value and its moments. Sparse code columns that are absent
/// from a batch are therefore left alone, and an all-zero gradient is the
/// identity on the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl AdamState {
    pub fn new<P: Parameterized>(params: &P, config: AdamConfig) -> Self {
        let shapes: Vec<Tensor2> = params
            .blocks()
            .iter()
            .map(|(_, t)| Tensor2::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            config,
            t: 0,
            first: shapes.clone(),
            second: shapes,
        }
    }

    pub fn step<P: Parameterized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        if grad_blocks.len() != self.first.len() {
            return Err(Error::numeric("adam: parameter block count changed"));
        }
        for (name, g) in &grad_blocks {
            if !g.is_finite() {
                return Err(Error::numeric(format!("gradient blow-up in block '{name}'")));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, (_, p)) in params.blocks_mut().into_iter().enumerate() {
            let g = grad_blocks[k].1;
            if !p.same_shape(g) {
                return Err(Error::numeric(format!(
                    "adam: shape mismatch in block '{}'",
                    grad_blocks[k].0
                )));
            }
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                if gi == 0.0 {
                    continue;
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
