//! Adaptive-moment optimizer with decoupled weight decay.

use crate::error::{CptError, Result};

/// First/second moment estimates plus step count for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    /// Fresh state with the stock hyperparameters (0.9, 0.95, 1e-8).
    pub fn new(n_params: usize, weight_decay: f64) -> OptimizerState {
        OptimizerState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay,
        }
    }

    /// Zero the moments and the step count (fresh-optimizer semantics).
    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// One update: decay params by (1 - lr*wd), then apply the bias-corrected
    /// moment step. Non-finite gradients abort before any mutation and signal
    /// divergence at `global_step`.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        global_step: u64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CptError::InvalidInput(format!(
                "optimizer over {} params got {} params, {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if lr < 0.0 || !lr.is_finite() {
            return Err(CptError::InvalidInput(format!(
                "learning rate {lr} must be finite and non-negative"
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(CptError::Divergence { global_step });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        for i in 0..params.len() {
            params[i] *= decay;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
