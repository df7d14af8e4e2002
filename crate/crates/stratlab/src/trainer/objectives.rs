//! Assembled objectives: the mutual-information lower bound, the segment
//! reward field, imagined rollouts, and the reward-head regression.
//!
//! The marginal denominators are evaluated tensor-level and injected as
//! constants: the MI bound's gradient reaches only its owner tags
//! (xi, phi, omega, theta), never the marginal models.

use rand::rngs::StdRng;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{discounted_segment_weight, JointTrajectory, SamplePair, TrajStep};
use crate::error::Result;
use crate::latent::ppo::SegmentDecision;
use crate::latent::Strategy;
use crate::nn::{Binding, Graph, ParamSet, RmsProp, Tensor, Var};
use crate::predict::posterior::obs_targets;

use super::models::Models;

/// Per-pair decomposition of the bound.
#[derive(Clone, Debug)]
pub struct MiTerms {
    pub k: usize,
    /// `log q_xi(z | zeta, tau) - log pi_m(z | tau)`.
    pub identifiability: f64,
    /// `sum_t log sigma(a_t | tau_t; z) - log p_hat(a_t | tau_t)`.
    pub action: f64,
    /// `sum_t log q_phi(o_{t+1} | .; z) - log p_hat(o_{t+1} | .)`.
    pub observation: f64,
    pub total: f64,
}

/// Monte-Carlo estimate of the bound over a batch.
#[derive(Clone, Debug)]
pub struct MIEstimate {
    pub per_pair: Vec<MiTerms>,
    pub mean: f64,
    /// Mean of `gamma^{ks} J_MI^k` over the batch.
    pub discounted_mean: f64,
    pub std_error: f64,
}

impl MIEstimate {
    fn from_terms(per_pair: Vec<MiTerms>, gamma: f64, s: usize) -> MIEstimate {
        let n = per_pair.len().max(1) as f64;
        let mean = per_pair.iter().map(|t| t.total).sum::<f64>() / n;
        let discounted_mean = per_pair
            .iter()
            .map(|t| discounted_segment_weight(t.k, s, gamma) * t.total)
            .sum::<f64>()
            / n;
        let var = per_pair.iter().map(|t| (t.total - mean) * (t.total - mean)).sum::<f64>() / n;
        let std_error = (var / n).sqrt();
        MIEstimate { per_pair, mean, discounted_mean, std_error }
    }
}

/// How the strategy enters the bound: the recorded on-policy sample, or a
/// fresh reparameterized draw for pathwise gradients.
pub enum ZSource {
    Recorded,
    Resampled { seed: u64 },
}

pub struct MiBoundOutput {
    /// Mean of per-pair `gamma^{ks} J_MI^k` (the maximization target).
    pub discounted_mean: Var,
    /// Mean over pairs of `log q_phi` sums (the D_phi surrogate is its
    /// negation).
    pub q_phi_mean: Var,
    /// Mean over pairs of `log q_xi` (the D_xi surrogate is its negation).
    pub q_xi_mean: Var,
    /// Per-pair plain totals.
    pub estimate: MIEstimate,
}

/// Where the marginal denominators come from: the learned psi models, or
/// caller-provided per-pair `(log p(a|tau) sum, log p(o'|a,tau) sum)`
/// values (e.g. an enumeration oracle in tests).
pub enum MarginalSource<'a> {
    Learned,
    Provided(&'a [(f64, f64)]),
}

/// Build the Monte-Carlo lower bound over replayed (history, segment, z)
/// pairs. Bindings: omega (latent policy), phi, xi, theta. The marginal
/// log-probabilities are constants: the bound's gradient never reaches the
/// marginal models.
#[allow(clippy::too_many_arguments)]
pub fn mi_lower_bound(
    g: &mut Graph,
    models: &Models,
    b_omega: &Binding,
    b_phi: &Binding,
    b_xi: &Binding,
    b_theta: &Binding,
    pairs: &[SamplePair<Strategy>],
    gamma: f64,
    s: usize,
    z_source: &ZSource,
    marginal_source: &MarginalSource<'_>,
) -> Result<MiBoundOutput> {
    if pairs.is_empty() {
        return Err(crate::error::Error::invalid_argument("empty MI batch"));
    }
    let mut noise_rng = match z_source {
        ZSource::Recorded => None,
        ZSource::Resampled { seed } => Some(<StdRng as rand::SeedableRng>::seed_from_u64(*seed)),
    };

    let mut per_pair = Vec::with_capacity(pairs.len());
    let mut weighted_terms: Vec<Var> = Vec::with_capacity(pairs.len());
    let mut q_phi_terms: Vec<Var> = Vec::with_capacity(pairs.len());
    let mut q_xi_terms: Vec<Var> = Vec::with_capacity(pairs.len());
    for (pair_idx, pair) in pairs.iter().enumerate() {
        // marginal denominators, detached
        let (act_marg, obs_marg) = match marginal_source {
            MarginalSource::Provided(values) => values[pair_idx],
            MarginalSource::Learned => {
                let mut mg = Graph::new();
                let mb = models.psi_marginals.bind(&mut mg);
                let a = models
                    .marginals
                    .action_logp_graph(&mut mg, &mb, &pair.history, &pair.segment);
                let o = models.marginals.obs_logp_graph(
                    &mut mg,
                    &mb,
                    &pair.history,
                    &pair.segment,
                    pair.next_obs.as_ref(),
                )?;
                (mg.value(a).item(), mg.value(o).item())
            }
        };

        // strategy variables
        let (z_a, z_r_pre, z_r, log_pi) = match &mut noise_rng {
            None => {
                let z_a = g.constant(pair.strategy.z_a.clone());
                let z_r_pre = g.constant(pair.strategy.z_r_pre.clone());
                let z_r = g.constant(pair.strategy.z_r.clone());
                let y = models.latent.encode_history(g, b_omega, &pair.history)?;
                let heads = models.latent.strategy_heads(g, b_omega, y);
                let log_pi = models.latent.log_prob_of(
                    g,
                    &heads,
                    &pair.strategy.z_a,
                    &pair.strategy.z_r_pre,
                );
                (z_a, z_r_pre, z_r, log_pi)
            }
            Some(rng) => {
                let d = models.cfg.d_z;
                let n = models.cfg.n_agents;
                let noise_a = Tensor::from_fn(d, n, |_, _| rng.sample(StandardNormal));
                let noise_r = Tensor::from_fn(d, n, |_, _| rng.sample(StandardNormal));
                let y = models.latent.encode_history(g, b_omega, &pair.history)?;
                let heads = models.latent.strategy_heads(g, b_omega, y);
                let vars = models.latent.sample_strategy_graph(
                    g,
                    b_omega,
                    &pair.history,
                    &heads,
                    &noise_a,
                    &noise_r,
                );
                (vars.z_a, vars.z_r_pre, vars.z_r, vars.log_prob)
            }
        };

        // per-agent conditioning vectors [z_A^i; z_R^i]
        let n = models.cfg.n_agents;
        let z_cond: Vec<Var> = (0..n)
            .map(|i| {
                let za_i = g.slice_cols(z_a, i, i + 1);
                let zr_i = g.slice_cols(z_r, i, i + 1);
                g.concat_rows(&[za_i, zr_i])
            })
            .collect();

        let lp_xi = models.strat_post.logp_graph(g, b_xi, &pair.history, &pair.segment, z_a, z_r_pre);
        let identifiability = g.sub(lp_xi, log_pi);

        let z_r_flat = {
            let cols: Vec<Var> = (0..n).map(|i| g.slice_cols(z_r, i, i + 1)).collect();
            g.concat_rows(&cols)
        };
        let sigma_lp = models.qnets.action_logp_graph(
            g,
            b_theta,
            &pair.history,
            &pair.segment,
            z_a,
            z_r_flat,
        );
        let action_term = g.add_scalar(sigma_lp, -act_marg);

        let targets = obs_targets(&pair.segment, pair.next_obs.as_ref());
        let qphi_lp = models.obs_post.logp_segment_graph(
            g,
            b_phi,
            &pair.history,
            &pair.segment,
            &targets,
            Some(&z_cond),
        )?;
        let obs_term = g.add_scalar(qphi_lp, -obs_marg);

        let partial = g.add(identifiability, action_term);
        let total = g.add(partial, obs_term);
        let w = discounted_segment_weight(pair.k, s, gamma);
        weighted_terms.push(g.scale(total, w));
        q_phi_terms.push(qphi_lp);
        q_xi_terms.push(lp_xi);

        per_pair.push(MiTerms {
            k: pair.k,
            identifiability: g.value(identifiability).item(),
            action: g.value(action_term).item(),
            observation: g.value(obs_term).item(),
            total: g.value(total).item(),
        });
    }
    let stacked = g.concat_rows(&weighted_terms);
    let discounted_mean = g.mean_all(stacked);
    let phi_stack = g.concat_rows(&q_phi_terms);
    let q_phi_mean = g.mean_all(phi_stack);
    let xi_stack = g.concat_rows(&q_xi_terms);
    let q_xi_mean = g.mean_all(xi_stack);
    let estimate = MIEstimate::from_terms(per_pair, gamma, s);
    Ok(MiBoundOutput { discounted_mean, q_phi_mean, q_xi_mean, estimate })
}

/// Value-only MI estimate (no graph kept).
pub fn mi_estimate_value(
    models: &Models,
    pairs: &[SamplePair<Strategy>],
    gamma: f64,
    s: usize,
) -> Result<MIEstimate> {
    mi_estimate_value_with(models, pairs, gamma, s, &MarginalSource::Learned)
}

pub fn mi_estimate_value_with(
    models: &Models,
    pairs: &[SamplePair<Strategy>],
    gamma: f64,
    s: usize,
    marginal_source: &MarginalSource<'_>,
) -> Result<MIEstimate> {
    let mut g = Graph::new();
    let b_omega = models.omega.bind(&mut g);
    let b_phi = models.phi.bind(&mut g);
    let b_xi = models.xi.bind(&mut g);
    let b_theta = models.theta.bind(&mut g);
    let out = mi_lower_bound(
        &mut g,
        models,
        &b_omega,
        &b_phi,
        &b_xi,
        &b_theta,
        pairs,
        gamma,
        s,
        &ZSource::Recorded,
        marginal_source,
    )?;
    Ok(out.estimate)
}

/// The segment-level reward field
/// `r(tau_ks, z_k) = lambda_m R(zeta_k) + lambda_MI (MI terms of the pair)`.
pub fn strategy_reward(
    models: &Models,
    pair: &SamplePair<Strategy>,
    lambda_m: f64,
    lambda_mi: f64,
    gamma: f64,
    s: usize,
) -> Result<f64> {
    let extrinsic: f64 = pair.seg_rewards.iter().sum();
    if lambda_mi == 0.0 {
        return Ok(lambda_m * extrinsic);
    }
    let est = mi_estimate_value(models, std::slice::from_ref(pair), gamma, s)?;
    Ok(lambda_m * extrinsic + lambda_mi * est.per_pair[0].total)
}

/// One imagined rollout from a starting history: alternately sample
/// strategies and decode segments with the predictive model, scoring each
/// imagined segment with the reward head.
pub struct ImaginedRollout {
    pub decisions: Vec<SegmentDecision>,
    /// `J_m = sum_k gamma^{ks} R_hat(zeta_hat_k)`, k starting at 1.
    pub j_m: f64,
}

pub fn imagined_rollout(
    models: &Models,
    start: &JointTrajectory,
    depth: usize,
    s: usize,
    gamma: f64,
    rng: &mut StdRng,
) -> Result<ImaginedRollout> {
    assert!(depth >= 1, "rollout depth must be >= 1");
    let mut tau = start.clone();
    let mut decisions = Vec::with_capacity(depth);
    let mut j_m = 0.0;
    for k in 1..=depth {
        let strategy = models.latent.sample_strategy(&models.omega, &tau, rng)?;
        let z_cond = models.z_cond(&strategy);
        let imagined = models.predictor.imagine_segment(&models.eta, &tau, &z_cond, s);
        let seg_steps: Vec<Tensor> = (0..s)
            .map(|p| {
                let cols: Vec<Tensor> = imagined
                    .iter()
                    .map(|steps| Tensor::col(&models.cfg.enc.step_vec(&steps[p])))
                    .collect();
                Tensor::from_columns(&cols)
            })
            .collect();
        let r_hat = models.reward_head.predict_value(&models.psi_reward, &seg_steps);
        j_m += gamma.powi((k * s) as i32) * r_hat;
        decisions.push(SegmentDecision { history: tau.clone(), strategy, reward: r_hat });
        for p in 0..s {
            let obs: Vec<Vec<f64>> = imagined.iter().map(|steps| steps[p].obs.clone()).collect();
            let acts: Vec<usize> = imagined.iter().map(|steps| steps[p].action).collect();
            tau.push_step(&obs, &acts, 0.0, false);
        }
    }
    Ok(ImaginedRollout { decisions, j_m })
}

/// Squared-error regression of the reward head onto realized segment
/// returns; one RMSprop step, returns the loss before the step.
pub fn reward_head_update(
    reward_head: &super::models::RewardHead,
    enc: &crate::encode::EncodeSpec,
    psi_reward: &mut ParamSet,
    opt: &mut RmsProp,
    batch: &[(&[Vec<TrajStep>], f64)],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(crate::error::Error::invalid_argument("empty reward-head batch"));
    }
    let mut g = Graph::new();
    let b = psi_reward.bind(&mut g);
    let mut terms = Vec::with_capacity(batch.len());
    for (per_agent_steps, target) in batch {
        let s = per_agent_steps[0].len();
        let steps: Vec<Var> = (0..s)
            .map(|p| {
                let cols: Vec<Tensor> = per_agent_steps
                    .iter()
                    .map(|steps| Tensor::col(&enc.step_vec(&steps[p])))
                    .collect();
                g.constant(Tensor::from_columns(&cols))
            })
            .collect();
        let pred = reward_head.predict_graph(&mut g, &b, &steps);
        let diff = g.add_scalar(pred, -target);
        terms.push(g.mul(diff, diff));
    }
    let stacked = g.concat_rows(&terms);
    let loss = g.mean_all(stacked);
    let grads = g.backward(loss)?;
    let value = g.value(loss).item();
    let gt = b.gradients(psi_reward, &grads);
    opt.step(psi_reward, &gt)?;
    Ok(value)
}
