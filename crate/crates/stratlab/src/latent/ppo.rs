//! Clipped on-policy optimization of the latent policy over the
//! segment-level MDP: state = encoded history at a segment boundary, action
//! = the sampled strategy, reward = the segment reward field.

use crate::env::JointTrajectory;
use crate::error::{Error, Result};
use crate::nn::{Binding, Graph, ParamSet, RmsProp, Tensor, Var};

use super::{LatentPolicy, Strategy};

#[derive(Clone, Debug)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub gae_lambda: f64,
    /// Discount per segment step, `gamma^s`.
    pub seg_discount: f64,
    pub value_coef: f64,
    pub normalize_advantages: bool,
}

impl PpoConfig {
    pub fn new(seg_discount: f64) -> Self {
        PpoConfig {
            clip: 0.2,
            epochs: 4,
            gae_lambda: 0.95,
            seg_discount,
            value_coef: 0.5,
            normalize_advantages: true,
        }
    }
}

/// One high-level decision: at the boundary before segment `k`, with joint
/// history `tau_{ks}`, the strategy `z_k` was sampled and earned the given
/// reward-field value.
#[derive(Clone, Debug)]
pub struct SegmentDecision {
    pub history: JointTrajectory,
    pub strategy: Strategy,
    pub reward: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PpoStats {
    pub n_decisions: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// Generalized advantage estimation over one episode's segment decisions.
fn gae(rewards: &[f64], values: &[f64], discount: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let k = rewards.len();
    let mut advantages = vec![0.0; k];
    let mut acc = 0.0;
    for i in (0..k).rev() {
        let next_v = if i + 1 < k { values[i + 1] } else { 0.0 };
        let delta = rewards[i] + discount * next_v - values[i];
        acc = delta + discount * lambda * acc;
        advantages[i] = acc;
    }
    let returns: Vec<f64> = advantages.iter().zip(values.iter()).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Clipped-ratio policy update on collected (on-policy) segment decisions,
/// grouped per episode. Rejects rollouts collected under a different
/// parameter version.
pub fn ppo_update(
    latent: &LatentPolicy,
    omega: &mut ParamSet,
    opt: &mut RmsProp,
    episodes: &[Vec<SegmentDecision>],
    cfg: &PpoConfig,
) -> Result<PpoStats> {
    let current = omega.version();
    let mut flat: Vec<&SegmentDecision> = Vec::new();
    for ep in episodes {
        for d in ep {
            if d.strategy.param_version != current {
                return Err(Error::StaleRollouts {
                    collected: d.strategy.param_version,
                    current,
                });
            }
            flat.push(d);
        }
    }
    if flat.is_empty() {
        return Ok(PpoStats::default());
    }

    // Baseline values on detached pooled encodings.
    let pooled: Vec<Tensor> = flat
        .iter()
        .map(|d| latent.pooled_encoding(omega, &d.history))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = pooled
        .iter()
        .map(|p| {
            let mut g = Graph::new();
            let b = omega.bind(&mut g);
            let v = latent.baseline_value(&mut g, &b, p);
            g.value(v).item()
        })
        .collect();

    let mut advantages = Vec::with_capacity(flat.len());
    let mut returns = Vec::with_capacity(flat.len());
    let mut off = 0;
    for ep in episodes {
        let k = ep.len();
        let rewards: Vec<f64> = ep.iter().map(|d| d.reward).collect();
        let (a, r) = gae(&rewards, &values[off..off + k], cfg.seg_discount, cfg.gae_lambda);
        advantages.extend(a);
        returns.extend(r);
        off += k;
    }
    if cfg.normalize_advantages && advantages.len() >= 4 {
        let n = advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt() + 1e-8;
        for a in &mut advantages {
            *a = (*a - mean) / std;
        }
    }

    let mut stats = PpoStats { n_decisions: flat.len(), ..Default::default() };
    for _epoch in 0..cfg.epochs {
        let build = |g: &mut Graph, b: &Binding| -> Result<(Var, Var)> {
            let mut surr_terms = Vec::with_capacity(flat.len());
            let mut value_terms = Vec::with_capacity(flat.len());
            for (i, d) in flat.iter().enumerate() {
                let y = latent.encode_history(g, b, &d.history)?;
                let heads = latent.strategy_heads(g, b, y);
                let lp_new = latent.log_prob_of(g, &heads, &d.strategy.z_a, &d.strategy.z_r_pre);
                let lp_diff = g.add_scalar(lp_new, -d.strategy.log_prob);
                let ratio = g.exp(lp_diff);
                let surr1 = g.scale(ratio, advantages[i]);
                let clipped = g.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
                let surr2 = g.scale(clipped, advantages[i]);
                surr_terms.push(g.minimum(surr1, surr2));

                let v = latent.baseline_value(g, b, &pooled[i]);
                let diff = g.add_scalar(v, -returns[i]);
                value_terms.push(g.mul(diff, diff));
            }
            let surr = g.concat_rows(&surr_terms);
            let surr_mean = g.mean_all(surr);
            let policy_loss = g.neg(surr_mean);
            let verr = g.concat_rows(&value_terms);
            let value_loss = g.mean_all(verr);
            Ok((policy_loss, value_loss))
        };

        let mut g = Graph::new();
        let b = omega.bind(&mut g);
        let (policy_loss, value_loss) = build(&mut g, &b)?;
        let scaled_v = g.scale(value_loss, cfg.value_coef);
        let total = g.add(policy_loss, scaled_v);
        let grads = g.backward(total)?;
        stats.policy_loss = g.value(policy_loss).item();
        stats.value_loss = g.value(value_loss).item();
        let grad_tensors = b.gradients(omega, &grads);
        opt.step(omega, &grad_tensors)?;
    }
    Ok(stats)
}
