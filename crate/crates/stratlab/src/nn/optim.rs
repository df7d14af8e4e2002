//! RMSprop: `v <- alpha v + (1-alpha) g^2; p <- p - lr g / (sqrt(v) + 1e-8)`.
//! No momentum, no weight decay.

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 5e-4;
pub const DEFAULT_ALPHA: f64 = 0.99;
const EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    state: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(params: &ParamSet, lr: f64, alpha: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0,1)");
        let state = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        RmsProp { lr, alpha, state }
    }

    pub fn with_defaults(params: &ParamSet) -> Self {
        Self::new(params, DEFAULT_LR, DEFAULT_ALPHA)
    }

    /// Descend along `grads`. Rejects non-finite gradients.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.state.len() {
            return Err(Error::invalid_argument("gradient count mismatch"));
        }
        for g in grads {
            if !g.is_finite() {
                return Err(Error::numeric("non-finite gradient in rmsprop step"));
            }
        }
        let mut deltas = Vec::with_capacity(grads.len());
        for (v, g) in self.state.iter_mut().zip(grads.iter()) {
            let mut delta = Tensor::zeros(g.rows(), g.cols());
            for i in 0..g.len() {
                let gi = g.data()[i];
                let vi = self.alpha * v.data()[i] + (1.0 - self.alpha) * gi * gi;
                v.data_mut()[i] = vi;
                delta.data_mut()[i] = self.lr * gi / (vi.sqrt() + EPS);
            }
            deltas.push(delta);
        }
        params.apply_deltas(&deltas);
        Ok(())
    }
}
