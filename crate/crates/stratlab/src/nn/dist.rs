//! Distribution helpers built on graph ops: diagonal Gaussians (log-density,
//! reparameterized sampling) and categorical log-densities.

use super::graph::{Graph, Var};
use super::tensor::Tensor;

pub const LN_2PI: f64 = 1.8378770664093453;

/// Log-density of `x` under a diagonal Gaussian, summed over all entries.
/// `x`, `mu`, `sigma` share a shape; `sigma` must be strictly positive.
pub fn gaussian_logp(g: &mut Graph, x: Var, mu: Var, sigma: Var) -> Var {
    let d = g.value(x).len() as f64;
    let diff = g.sub(x, mu);
    let standardized = g.div(diff, sigma);
    let quad = g.mul(standardized, standardized);
    let quad_sum = g.sum_all(quad);
    let log_sigma = g.ln(sigma);
    let log_sigma_sum = g.sum_all(log_sigma);
    let half_quad = g.scale(quad_sum, 0.5);
    let partial = g.add(log_sigma_sum, half_quad);
    let neg = g.neg(partial);
    g.add_scalar(neg, -0.5 * d * LN_2PI)
}

/// Closed-form log-density evaluated on plain tensors.
pub fn gaussian_logp_value(x: &Tensor, mu: &Tensor, sigma: &Tensor) -> f64 {
    assert_eq!(x.shape(), mu.shape());
    assert_eq!(x.shape(), sigma.shape());
    let mut acc = 0.0;
    for i in 0..x.len() {
        let s = sigma.data()[i];
        let z = (x.data()[i] - mu.data()[i]) / s;
        acc += -s.ln() - 0.5 * z * z - 0.5 * LN_2PI;
    }
    acc
}

/// Reparameterized sample `mu + sigma .* eps` with `eps` injected as a
/// constant, so gradients flow to `mu` and `sigma`.
pub fn gaussian_rsample(g: &mut Graph, mu: Var, sigma: Var, eps: &Tensor) -> Var {
    assert_eq!(g.value(mu).shape(), eps.shape(), "noise shape mismatch");
    let e = g.constant(eps.clone());
    let scaled = g.mul(sigma, e);
    g.add(mu, scaled)
}

/// Log-probability of the one-hot columns under per-column softmax of the
/// logits: `logits` and `onehot` are `(K x batch)`; returns the scalar sum
/// over the batch.
pub fn categorical_logp(g: &mut Graph, logits: Var, onehot: &Tensor) -> Var {
    assert_eq!(g.value(logits).shape(), onehot.shape(), "one-hot shape mismatch");
    let logp = g.log_softmax_cols(logits);
    let mask = g.constant(onehot.clone());
    let picked = g.mul(logp, mask);
    g.sum_all(picked)
}
