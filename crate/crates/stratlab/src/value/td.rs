//! TD learning on fully unrolled episodes with the monotone mixer.
//!
//! Targets come from a frozen parameter snapshot: per-agent greedy actions
//! under the decomposition, mixed into `Q_tot`, evaluated tensor-level in a
//! single unroll per episode so no gradient can leak out of the target
//! network.

use crate::env::JointTrajectory;
use crate::error::Result;
use crate::latent::Strategy;
use crate::nn::{Binding, Graph, ParamSet, Tensor, Var};

use super::{flatten_cols, Mixer, UtilityNets};

/// One episode prepared for a TD batch. `total_rewards` already includes
/// any intrinsic bonus placement.
pub struct TdEpisode<'a> {
    pub traj: &'a JointTrajectory,
    pub states: &'a [Vec<f64>],
    pub strategies: &'a [Strategy],
    pub total_rewards: Vec<f64>,
}

fn strategy_at(strategies: &[Strategy], t: usize, s: usize) -> &Strategy {
    &strategies[(t / s).min(strategies.len() - 1)]
}

fn bind_strategies(
    g: &mut Graph,
    strategies: &[Strategy],
    len: usize,
    s: usize,
) -> (Vec<Var>, Vec<Var>) {
    let z_a = (0..len)
        .map(|u| g.constant(strategy_at(strategies, u, s).z_a.clone()))
        .collect();
    let z_r = (0..len)
        .map(|u| g.constant(flatten_cols(&strategy_at(strategies, u, s).z_r)))
        .collect();
    (z_a, z_r)
}

/// Greedy-mixed `Q_tot` at every step under the target snapshot.
fn target_qtots(
    nets: &UtilityNets,
    mixer: &Mixer,
    target: &ParamSet,
    ep: &TdEpisode<'_>,
    s: usize,
) -> Vec<f64> {
    let enc = &nets.cfg.enc;
    let len = ep.traj.len();
    let mut g = Graph::new();
    let b = target.bind(&mut g);
    let inputs: Vec<Var> = enc.q_inputs(ep.traj).into_iter().map(|x| g.constant(x)).collect();
    let (z_a, z_r) = bind_strategies(&mut g, ep.strategies, len, s);
    let qs = nets.unroll(&mut g, &b, &inputs, &z_a, &z_r);
    (0..len)
        .map(|t| {
            let q_t = g.value(qs[t].q_i).clone();
            let mut chosen = Tensor::zeros(nets.cfg.n_agents, 1);
            for i in 0..nets.cfg.n_agents {
                let mut best = 0;
                for a in 1..q_t.rows() {
                    if q_t.get(a, i) > q_t.get(best, i) {
                        best = a;
                    }
                }
                chosen.set(i, 0, q_t.get(best, i));
            }
            let state = g.constant(Tensor::col(&ep.states[t]));
            let chosen_v = g.constant(chosen);
            let out = mixer.mix(&mut g, &b, chosen_v, state);
            g.value(out).item()
        })
        .collect()
}

pub struct TdOutput {
    pub loss: Var,
    pub n_terms: usize,
}

/// Build the TD loss over a batch of episodes:
/// `mean (r_total + gamma (1-done) max_a' Q_tot^target - Q_tot)^2`.
/// Episodes truncated without termination contribute no term at the cut.
pub fn td_loss(
    g: &mut Graph,
    b_live: &Binding,
    nets: &UtilityNets,
    mixer: &Mixer,
    target: &ParamSet,
    episodes: &[TdEpisode<'_>],
    gamma: f64,
    s: usize,
) -> Result<TdOutput> {
    let enc = nets.cfg.enc.clone();
    let mut sq_terms: Vec<Var> = Vec::new();
    for ep in episodes {
        let len = ep.traj.len();
        assert_eq!(ep.states.len(), len, "one global state per step");
        assert_eq!(ep.total_rewards.len(), len);

        let boot = target_qtots(nets, mixer, target, ep, s);

        let inputs: Vec<Var> =
            enc.q_inputs(ep.traj).into_iter().map(|x| g.constant(x)).collect();
        let (z_a, z_r) = bind_strategies(g, ep.strategies, len, s);
        let qs = nets.unroll(g, b_live, &inputs, &z_a, &z_r);

        for t in 0..len {
            let done = ep.traj.done_mask[t];
            let target_value = if done {
                ep.total_rewards[t]
            } else if t + 1 < len {
                ep.total_rewards[t] + gamma * boot[t + 1]
            } else {
                continue; // truncated without termination: no TD term
            };

            let taken = enc.action_onehot_at(ep.traj, t);
            let mask = g.constant(taken);
            let picked = g.mul(qs[t].q_i, mask);
            let picked_t = g.transpose(picked); // (n x n_actions)
            let ones = g.constant(Tensor::full(enc.n_actions, 1, 1.0));
            let chosen_col = g.matmul(picked_t, ones); // (n x 1)
            let state = g.constant(Tensor::col(&ep.states[t]));
            let q_tot = mixer.mix(g, b_live, chosen_col, state);
            let diff = g.add_scalar(q_tot, -target_value);
            sq_terms.push(g.mul(diff, diff));
        }
    }
    if sq_terms.is_empty() {
        let zero = g.scalar(0.0);
        return Ok(TdOutput { loss: zero, n_terms: 0 });
    }
    let stacked = g.concat_rows(&sq_terms);
    let loss = g.mean_all(stacked);
    Ok(TdOutput { loss, n_terms: sq_terms.len() })
}

impl crate::encode::EncodeSpec {
    /// One-hot matrix of the actions taken at step `t` of a trajectory.
    pub fn action_onehot_at(&self, traj: &JointTrajectory, t: usize) -> Tensor {
        let n = traj.n_agents();
        let mut out = Tensor::zeros(self.n_actions, n);
        for i in 0..n {
            out.set(traj.per_agent[i].steps[t].action, i, 1.0);
        }
        out
    }
}
