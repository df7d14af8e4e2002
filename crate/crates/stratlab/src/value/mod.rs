//! Strategy-conditioned utilities and their decomposition:
//! `Q_i = Q_A^i + Q_R` with per-agent networks for the individual part and
//! one shared network consuming all relational strategies.

pub mod marginals;
pub mod mixer;
pub mod surprise;
pub mod td;

pub use marginals::MarginalModels;
pub use mixer::Mixer;
pub use surprise::surprise_reward;

use rand::Rng;

use crate::encode::EncodeSpec;
use crate::env::{JointTrajectory, Segment};
use crate::nn::dist::categorical_logp;
use crate::nn::{Act, Binding, Graph, Gru, Mlp, ParamSet, Tensor, Var};

#[derive(Clone, Debug)]
pub struct ValueConfig {
    pub n_agents: usize,
    pub enc: EncodeSpec,
    pub d_z: usize,
    /// GRU width of the utility networks.
    pub hidden: usize,
}

impl ValueConfig {
    pub fn new(n_agents: usize, enc: EncodeSpec, d_z: usize) -> Self {
        ValueConfig { n_agents, enc, d_z, hidden: 64 }
    }
}

struct AgentQ {
    pre: Mlp,
    gru: Gru,
    head: Mlp,
}

/// Per-agent utilities `Q_A^i` plus the shared relational `Q_R`.
pub struct UtilityNets {
    pub cfg: ValueConfig,
    agents: Vec<AgentQ>,
    shared_pre: Mlp,
    shared_gru: Gru,
    shared_head: Mlp,
}

/// Q-values of one step, all `(n_actions x n_agents)`.
pub struct QStep {
    pub q_a: Var,
    pub q_r: Var,
    /// `q_i = q_a + q_r`, exact by construction.
    pub q_i: Var,
}

impl UtilityNets {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, cfg: ValueConfig) -> Self {
        let in_dim = cfg.enc.in_dim();
        let h = cfg.hidden;
        let n_actions = cfg.enc.n_actions;
        let agents = (0..cfg.n_agents)
            .map(|i| AgentQ {
                pre: Mlp::new(ps, rng, &format!("q_a{i}.pre"), &[in_dim, h], Act::Relu, Act::Relu),
                gru: Gru::new(ps, rng, &format!("q_a{i}.gru"), h, h),
                head: Mlp::new(
                    ps,
                    rng,
                    &format!("q_a{i}.head"),
                    &[h + cfg.d_z, n_actions],
                    Act::Relu,
                    Act::Identity,
                ),
            })
            .collect();
        let shared_pre = Mlp::new(ps, rng, "q_r.pre", &[in_dim, h], Act::Relu, Act::Relu);
        let shared_gru = Gru::new(ps, rng, "q_r.gru", h, h);
        let shared_head = Mlp::new(
            ps,
            rng,
            "q_r.head",
            &[h + cfg.n_agents * cfg.d_z, n_actions],
            Act::Relu,
            Act::Identity,
        );
        UtilityNets { cfg, agents, shared_pre, shared_gru, shared_head }
    }

    /// Unroll utilities over a step-input sequence; `z_a[t]` is the
    /// `(d_z x n)` individual strategy active at step `t`, `z_r_flat[t]` the
    /// `(n*d_z x 1)` stacked relational strategies.
    pub fn unroll(
        &self,
        g: &mut Graph,
        b: &Binding,
        inputs: &[Var],
        z_a: &[Var],
        z_r_flat: &[Var],
    ) -> Vec<QStep> {
        let n = self.cfg.n_agents;
        assert_eq!(inputs.len(), z_a.len());
        assert_eq!(inputs.len(), z_r_flat.len());
        let mut agent_hidden: Vec<Var> =
            self.agents.iter().map(|a| a.gru.zero_state(g, 1)).collect();
        let mut shared_hidden = self.shared_gru.zero_state(g, n);
        let mut out = Vec::with_capacity(inputs.len());
        for (t, x) in inputs.iter().enumerate() {
            // shared stream over all agents at once
            let sp = self.shared_pre.forward(g, b, *x);
            shared_hidden = self.shared_gru.step(g, b, sp, shared_hidden);
            let z_r_tiled = g.concat_cols(&vec![z_r_flat[t]; n]);
            let shared_in = g.concat_rows(&[shared_hidden, z_r_tiled]);
            let q_r = self.shared_head.forward(g, b, shared_in);

            // per-agent streams
            let mut q_a_cols = Vec::with_capacity(n);
            for (i, agent) in self.agents.iter().enumerate() {
                let xi = g.slice_cols(*x, i, i + 1);
                let pi = agent.pre.forward(g, b, xi);
                agent_hidden[i] = agent.gru.step(g, b, pi, agent_hidden[i]);
                let zi = g.slice_cols(z_a[t], i, i + 1);
                let hin = g.concat_rows(&[agent_hidden[i], zi]);
                q_a_cols.push(agent.head.forward(g, b, hin));
            }
            let q_a = g.concat_cols(&q_a_cols);
            let q_i = g.add(q_a, q_r);
            out.push(QStep { q_a, q_r, q_i });
        }
        out
    }

    /// Q-values for the next action given a trajectory so far plus the
    /// current observation, under the active strategy (plain tensors).
    pub fn q_now(
        &self,
        theta: &ParamSet,
        traj: &JointTrajectory,
        current_obs: &[Vec<f64>],
        z_a: &Tensor,
        z_r: &Tensor,
    ) -> Tensor {
        let enc = &self.cfg.enc;
        let mut g = Graph::new();
        let b = theta.bind(&mut g);
        let mut inputs: Vec<Var> =
            enc.q_inputs(traj).into_iter().map(|t| g.constant(t)).collect();
        let prev: Option<Vec<usize>> = if traj.is_empty() {
            None
        } else {
            Some(traj.per_agent.iter().map(|l| l.steps[traj.len() - 1].action).collect())
        };
        inputs.push(g.constant(enc.q_input(current_obs, prev.as_deref())));
        let z_a_var = g.constant(z_a.clone());
        let z_r_flat = g.constant(flatten_cols(z_r));
        let steps = inputs.len();
        let z_a_all = vec![z_a_var; steps];
        let z_r_all = vec![z_r_flat; steps];
        let qs = self.unroll(&mut g, &b, &inputs, &z_a_all, &z_r_all);
        g.value(qs.last().unwrap().q_i).clone()
    }

    /// Summed log sigma(a_t | tau_t; z) over a segment's valid steps: the
    /// Boltzmann operator evaluated at the taken joint actions.
    pub fn action_logp_graph(
        &self,
        g: &mut Graph,
        b: &Binding,
        history: &JointTrajectory,
        segment: &Segment,
        z_a: Var,
        z_r_flat: Var,
    ) -> Var {
        let enc = &self.cfg.enc;
        let combined = append_segment(history, segment);
        let inputs: Vec<Var> =
            enc.q_inputs(&combined).into_iter().map(|t| g.constant(t)).collect();
        let steps = inputs.len();
        let z_a_all = vec![z_a; steps];
        let z_r_all = vec![z_r_flat; steps];
        let qs = self.unroll(g, b, &inputs, &z_a_all, &z_r_all);
        let mut terms = Vec::new();
        for (p, valid) in segment.valid_mask.iter().enumerate() {
            if !valid {
                continue;
            }
            let t = history.len() + p;
            let onehot = enc.segment_action_onehot(segment, p);
            terms.push(categorical_logp(g, qs[t].q_i, &onehot));
        }
        if terms.is_empty() {
            return g.scalar(0.0);
        }
        let stacked = g.concat_rows(&terms);
        g.sum_all(stacked)
    }
}

/// Product of per-agent softmaxes over actions: `(n_actions x n)` Q-values
/// to per-agent action distributions.
pub fn boltzmann(g: &mut Graph, q: Var) -> Var {
    g.softmax_cols(q)
}

/// Enumerated joint distribution (tensor level): probability of every joint
/// action under the product of per-agent softmaxes.
pub fn boltzmann_joint(q: &Tensor) -> Vec<(Vec<usize>, f64)> {
    let n_actions = q.rows();
    let n = q.cols();
    let mut per_agent = vec![vec![0.0; n_actions]; n];
    for (i, probs) in per_agent.iter_mut().enumerate() {
        let m = (0..n_actions).map(|a| q.get(a, i)).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for a in 0..n_actions {
            denom += (q.get(a, i) - m).exp();
        }
        for (a, p) in probs.iter_mut().enumerate() {
            *p = (q.get(a, i) - m).exp() / denom;
        }
    }
    let mut joint = vec![(Vec::new(), 1.0)];
    for probs in per_agent.iter() {
        let mut next = Vec::with_capacity(joint.len() * n_actions);
        for (acts, p) in &joint {
            for (a, pa) in probs.iter().enumerate() {
                let mut acts = acts.clone();
                acts.push(a);
                next.push((acts, p * pa));
            }
        }
        joint = next;
    }
    joint
}

/// Stack the columns of a `(d x n)` tensor into an `(n*d x 1)` vector.
pub fn flatten_cols(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(t.rows() * t.cols(), 1);
    for c in 0..t.cols() {
        for r in 0..t.rows() {
            out.set(c * t.rows() + r, 0, t.get(r, c));
        }
    }
    out
}

/// History plus the valid steps of the following segment as one trajectory.
pub fn append_segment(history: &JointTrajectory, segment: &Segment) -> JointTrajectory {
    let mut combined = history.clone();
    for (p, valid) in segment.valid_mask.iter().enumerate() {
        if !valid {
            break;
        }
        let obs: Vec<Vec<f64>> =
            segment.per_agent.iter().map(|rows| rows[p].obs.clone()).collect();
        let acts: Vec<usize> = segment.per_agent.iter().map(|rows| rows[p].action).collect();
        combined.push_step(&obs, &acts, 0.0, false);
    }
    combined
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Owner;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn boltzmann_closed_forms() {
        // constant Q -> uniform
        let q = Tensor::from_vec(2, 1, vec![3.0, 3.0]);
        let joint = boltzmann_joint(&q);
        for (_, p) in &joint {
            assert!((p - 0.5).abs() < 1e-12);
        }
        // [ln 2, 0] -> [2/3, 1/3]
        let q = Tensor::from_vec(2, 1, vec![2f64.ln(), 0.0]);
        let joint = boltzmann_joint(&q);
        assert!((joint[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((joint[1].1 - 1.0 / 3.0).abs() < 1e-12);
        // two uniform agents -> every joint action 1/4; sums to 1
        let q = Tensor::zeros(2, 2);
        let joint = boltzmann_joint(&q);
        assert_eq!(joint.len(), 4);
        let total: f64 = joint.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (_, p) in &joint {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_is_exact() {
        let mut ps = ParamSet::new(Owner::Theta);
        let mut rng = StdRng::seed_from_u64(0);
        let mut cfg = ValueConfig::new(2, EncodeSpec::rl(3, 4), 2);
        cfg.hidden = 8;
        let nets = UtilityNets::new(&mut ps, &mut rng, cfg);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.constant(Tensor::randn(7, 2, 1.0, &mut rng));
        let z_a = g.constant(Tensor::randn(2, 2, 1.0, &mut rng));
        let z_r = g.constant(Tensor::randn(4, 1, 1.0, &mut rng));
        let qs = nets.unroll(&mut g, &b, &[x], &[z_a], &[z_r]);
        let qa = g.value(qs[0].q_a).clone();
        let qr = g.value(qs[0].q_r).clone();
        let qi = g.value(qs[0].q_i).clone();
        for r in 0..4 {
            for c in 0..2 {
                assert_eq!(qi.get(r, c), qa.get(r, c) + qr.get(r, c));
            }
        }
    }
}
