//! Surprise intrinsic bonus: prediction residual plus a strictly decreasing
//! function of the segment's mutual-information estimate,
//! `alpha gamma^{ks} |zeta - F(tau, z)|_2 + beta gamma^{ks} exp(-J_MI^k)`.
//! Credited as reward at the segment's final valid step.

use crate::env::{discounted_segment_weight, Segment};
use crate::predict::PredictedSegment;

/// `h(x) = exp(-x)`: positive and strictly decreasing.
pub fn h_decreasing(x: f64) -> f64 {
    (-x).exp()
}

pub fn surprise_reward(
    prediction_residual: f64,
    j_mi_k: f64,
    k: usize,
    s: usize,
    gamma: f64,
    alpha: f64,
    beta: f64,
) -> f64 {
    assert!(alpha >= 0.0 && beta >= 0.0, "alpha and beta must be nonnegative");
    let w = discounted_segment_weight(k, s, gamma);
    alpha * w * prediction_residual + beta * w * h_decreasing(j_mi_k)
}

/// L2 norm of the (masked) difference between a realized segment and its
/// prediction, over observations and one-hot actions vs predicted
/// probabilities.
pub fn prediction_residual(segment: &Segment, predicted: &PredictedSegment) -> f64 {
    let mut sq = 0.0;
    for (i, rows) in segment.per_agent.iter().enumerate() {
        for (p, valid) in segment.valid_mask.iter().enumerate() {
            if !valid {
                continue;
            }
            let mean = &predicted.obs_mean[i];
            for (r, obs_val) in rows[p].obs.iter().enumerate() {
                let d = obs_val - mean.get(r, p);
                sq += d * d;
            }
            if let Some(act_prob) = &predicted.act_prob {
                let probs = &act_prob[i];
                for a in 0..probs.rows() {
                    let target = if rows[p].action == a { 1.0 } else { 0.0 };
                    let d = target - probs.get(a, p);
                    sq += d * d;
                }
            }
        }
    }
    sq.sqrt()
}
