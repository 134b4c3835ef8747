use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamaxConfig {
    pub peak_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        AdamaxConfig {
            peak_lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adamax moments: first moment `m`, infinity-norm accumulator `u`.
#[derive(Debug, Clone)]
pub struct AdamaxState<F> {
    pub config: AdamaxConfig,
    pub step: u64,
    first_moment: Vec<Tensor<F>>,
    inf_norm: Vec<Tensor<F>>,
}

impl<F: Real> AdamaxState<F> {
    pub fn new(config: AdamaxConfig, params: &[Tensor<F>]) -> Self {
        AdamaxState {
            config,
            step: 0,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            inf_norm: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn first_moment(&self) -> &[Tensor<F>] {
        &self.first_moment
    }

    pub fn inf_norm(&self) -> &[Tensor<F>] {
        &self.inf_norm
    }

    /// One update at learning rate `lr`:
    ///
    /// ```text
    /// m <- b1 m + (1 - b1) g
    /// u <- max(b2 u, |g|)
    /// p <- p - lr * (m / (1 - b1^t)) / (u + eps)
    /// ```
    ///
    /// A `None` gradient is treated as zero.
    pub fn step(&mut self, params: &mut [Tensor<F>], grads: &[Option<Tensor<F>>], lr: f64) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::shape(format!(
                "adamax over {} params with {} state slots and {} grads",
                params.len(),
                self.first_moment.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let b1 = F::of(self.config.beta1);
        let b2 = F::of(self.config.beta2);
        let eps = F::of(self.config.eps);
        let lr = F::of(lr);
        let bias_correction = F::one() - b1.powi(self.step.min(i32::MAX as u64) as i32);
        for (i, param) in params.iter_mut().enumerate() {
            let m = self.first_moment[i].data_mut();
            let u = self.inf_norm[i].data_mut();
            let p = param.data_mut();
            match &grads[i] {
                Some(g) => {
                    if g.len() != p.len() {
                        return Err(Error::shape(format!(
                            "gradient {i} has {} values for {} parameters",
                            g.len(),
                            p.len()
                        )));
                    }
                    for (((p, m), u), &g) in p.iter_mut().zip(m.iter_mut()).zip(u.iter_mut()).zip(g.data()) {
                        *m = b1 * *m + (F::one() - b1) * g;
                        *u = (b2 * *u).max(g.abs());
                        let m_hat = *m / bias_correction;
                        *p = *p - lr * m_hat / (*u + eps);
                    }
                }
                None => {
                    for ((p, m), u) in p.iter_mut().zip(m.iter_mut()).zip(u.iter_mut()) {
                        *m = b1 * *m;
                        *u = b2 * *u;
                        let m_hat = *m / bias_correction;
                        *p = *p - lr * m_hat / (*u + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
