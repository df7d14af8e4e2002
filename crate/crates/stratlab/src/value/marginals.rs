//! Maximum-likelihood marginal models: the z-free action marginal
//! `p(a_t | tau_t)` (factored over agents, shared recurrent network) and
//! the z-free transition marginal `p(o_{t+1} | a_t, tau_t)` reusing the
//! observation-posterior trunk with zero-width conditioning.

use rand::rngs::StdRng;

use crate::encode::EncodeSpec;
use crate::env::{JointTrajectory, Segment};
use crate::error::{Error, Result};
use crate::nn::dist::categorical_logp;
use crate::nn::{Act, Binding, Graph, Gru, Mlp, ParamSet, RmsProp, Var};
use crate::predict::posterior::{obs_targets, ObsLikelihood, ObsPosterior, ObsPosteriorConfig};

use super::append_segment;

pub struct MarginalModels {
    pub enc: EncodeSpec,
    pub n_agents: usize,
    act_gru: Gru,
    act_head: Mlp,
    pub obs_model: ObsPosterior,
}

impl MarginalModels {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut StdRng,
        n_agents: usize,
        enc: EncodeSpec,
        hidden: usize,
        channels: usize,
        dilations: &[usize],
        likelihood: ObsLikelihood,
    ) -> Self {
        let act_gru = Gru::new(ps, rng, "p_hat.act_gru", enc.in_dim(), hidden);
        let act_head =
            Mlp::new(ps, rng, "p_hat.act_head", &[hidden, enc.n_actions], Act::Relu, Act::Identity);
        let mut obs_cfg = ObsPosteriorConfig::new(n_agents, enc.clone(), 0);
        obs_cfg.cond_dim = 0;
        obs_cfg.channels = channels;
        obs_cfg.ctx_dim = hidden;
        obs_cfg.dilations = dilations.to_vec();
        obs_cfg.likelihood = likelihood;
        let obs_model = ObsPosterior::new(ps, rng, "p_hat.obs", obs_cfg);
        MarginalModels { enc, n_agents, act_gru, act_head, obs_model }
    }

    /// Summed log p(a_t | tau_t) over a segment's valid steps, factored as
    /// a product over agents of the shared recurrent model.
    pub fn action_logp_graph(
        &self,
        g: &mut Graph,
        b: &Binding,
        history: &JointTrajectory,
        segment: &Segment,
    ) -> Var {
        let combined = append_segment(history, segment);
        let inputs: Vec<Var> =
            self.enc.q_inputs(&combined).into_iter().map(|t| g.constant(t)).collect();
        let hs = self.act_gru.run_all(g, b, &inputs, self.n_agents);
        let mut terms = Vec::new();
        for (p, valid) in segment.valid_mask.iter().enumerate() {
            if !valid {
                continue;
            }
            let t = history.len() + p;
            let logits = self.act_head.forward(g, b, hs[t]);
            let onehot = self.enc.segment_action_onehot(segment, p);
            terms.push(categorical_logp(g, logits, &onehot));
        }
        if terms.is_empty() {
            return g.scalar(0.0);
        }
        let stacked = g.concat_rows(&terms);
        g.sum_all(stacked)
    }

    /// Summed log p(o_{t+1} | a_t, tau_t) over the segment's scored steps.
    pub fn obs_logp_graph(
        &self,
        g: &mut Graph,
        b: &Binding,
        history: &JointTrajectory,
        segment: &Segment,
        next_obs: Option<&Vec<Vec<f64>>>,
    ) -> Result<Var> {
        let targets = obs_targets(segment, next_obs);
        self.obs_model.logp_segment_graph(g, b, history, segment, &targets, None)
    }
}

/// One batch item for the marginal MLE update.
pub struct MarginalItem<'a> {
    pub history: &'a JointTrajectory,
    pub segment: &'a Segment,
    pub next_obs: Option<&'a Vec<Vec<f64>>>,
}

/// Maximum-likelihood step on both marginal models; returns the negative
/// log-likelihood before the step.
pub fn marginal_update(
    models: &MarginalModels,
    psi: &mut ParamSet,
    opt: &mut RmsProp,
    items: &[MarginalItem<'_>],
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::invalid_argument("empty marginal batch"));
    }
    let mut g = Graph::new();
    let b = psi.bind(&mut g);
    let mut terms = Vec::new();
    for item in items {
        let act = models.action_logp_graph(&mut g, &b, item.history, item.segment);
        let obs = models.obs_logp_graph(&mut g, &b, item.history, item.segment, item.next_obs)?;
        terms.push(g.add(act, obs));
    }
    let stacked = g.concat_rows(&terms);
    let mean = g.mean_all(stacked);
    let loss = g.neg(mean);
    let grads = g.backward(loss)?;
    let value = g.value(loss).item();
    let grad_tensors = b.gradients(psi, &grads);
    opt.step(psi, &grad_tensors)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::segment_trajectory;
    use crate::nn::Owner;
    use rand::{Rng, SeedableRng};

    fn models(seed: u64, vocab: Vec<Vec<f64>>) -> (MarginalModels, ParamSet) {
        let mut ps = ParamSet::new(Owner::Psi);
        let mut rng = StdRng::seed_from_u64(seed);
        let m = MarginalModels::new(
            &mut ps,
            &mut rng,
            1,
            EncodeSpec::rl(1, 2),
            6,
            5,
            &[1],
            ObsLikelihood::Categorical { vocab },
        );
        (m, ps)
    }

    #[test]
    fn action_marginal_learns_uniform_actions() {
        // actions drawn uniformly: the fitted marginal must approach
        // uniform; enumeration KL < 1e-2.
        let vocab = vec![vec![0.0], vec![1.0]];
        let (m, mut ps) = models(0, vocab.clone());
        let mut opt = RmsProp::new(&ps, 5e-3, 0.99);
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..400 {
            let mut traj = JointTrajectory::new(1);
            for t in 0..2 {
                let a = rng.random_range(0..2);
                traj.push_step(&[vec![0.0]], &[a], 0.0, t == 1);
            }
            let segs = segment_trajectory(&traj, 2).unwrap();
            let history = traj.prefix(0);
            let items = vec![MarginalItem { history: &history, segment: &segs[0], next_obs: None }];
            marginal_update(&m, &mut ps, &mut opt, &items).unwrap();
        }
        // enumerate the model's action distribution at the first step
        let mut probe = JointTrajectory::new(1);
        probe.push_step(&[vec![0.0]], &[0], 0.0, false);
        let seg = segment_trajectory(&probe, 1).unwrap()[0].clone();
        let history = probe.prefix(0);
        let mut lps = [0.0f64; 2];
        for a in 0..2 {
            let mut probe_a = JointTrajectory::new(1);
            probe_a.push_step(&[vec![0.0]], &[a], 0.0, false);
            let seg_a = segment_trajectory(&probe_a, 1).unwrap()[0].clone();
            let mut g = Graph::new();
            let b = ps.bind(&mut g);
            let lp = m.action_logp_graph(&mut g, &b, &history, &seg_a);
            lps[a] = g.value(lp).item();
        }
        let _ = seg;
        let kl: f64 = (0..2).map(|a| 0.5 * (0.5f64.ln() - lps[a])).sum();
        assert!(kl >= -1e-12, "kl {kl}");
        assert!(kl < 1e-2, "uniform KL too large: {kl}");
    }

    #[test]
    fn transition_marginal_concentrates_on_deterministic_next_obs() {
        // deterministic transition: obs 0 followed by obs 1 always
        let vocab = vec![vec![0.0], vec![1.0]];
        let (m, mut ps) = models(1, vocab.clone());
        let mut opt = RmsProp::new(&ps, 5e-3, 0.99);
        let mut traj = JointTrajectory::new(1);
        traj.push_step(&[vec![0.0]], &[0], 0.0, false);
        let segs = segment_trajectory(&traj, 1).unwrap();
        let history = traj.prefix(0);
        let next = vec![vec![1.0]];
        for _ in 0..600 {
            let items = vec![MarginalItem {
                history: &history,
                segment: &segs[0],
                next_obs: Some(&next),
            }];
            marginal_update(&m, &mut ps, &mut opt, &items).unwrap();
        }
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let lp = m.obs_logp_graph(&mut g, &b, &history, &segs[0], Some(&next)).unwrap();
        let p = g.value(lp).item().exp();
        assert!(p > 0.99, "mass on the true next observation: {p}");
    }

    #[test]
    fn outputs_are_valid_distributions() {
        let vocab = vec![vec![0.0], vec![1.0]];
        let (m, ps) = models(2, vocab.clone());
        let mut traj = JointTrajectory::new(1);
        traj.push_step(&[vec![0.0]], &[1], 0.0, false);
        let segs = segment_trajectory(&traj, 1).unwrap();
        let history = traj.prefix(0);
        // actions: sum over both actions of p(a) = 1
        let mut total_a = 0.0;
        for a in 0..2 {
            let mut probe = JointTrajectory::new(1);
            probe.push_step(&[vec![0.0]], &[a], 0.0, false);
            let seg = segment_trajectory(&probe, 1).unwrap()[0].clone();
            let mut g = Graph::new();
            let b = ps.bind(&mut g);
            let lp = m.action_logp_graph(&mut g, &b, &history, &seg);
            total_a += g.value(lp).item().exp();
        }
        assert!((total_a - 1.0).abs() < 1e-9);
        // observations: sum over the vocabulary of p(o') = 1
        let mut total_o = 0.0;
        for v in &vocab {
            let next = vec![v.clone()];
            let mut g = Graph::new();
            let b = ps.bind(&mut g);
            let lp = m.obs_logp_graph(&mut g, &b, &history, &segs[0], Some(&next)).unwrap();
            total_o += g.value(lp).item().exp();
        }
        assert!((total_o - 1.0).abs() < 1e-9);
    }
}
