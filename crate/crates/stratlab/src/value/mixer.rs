//! Monotone mixing of per-agent utilities into `Q_tot`, with hypernetworks
//! generating nonnegative weights and state-conditioned biases.

use rand::Rng;

use crate::nn::{Act, Binding, Graph, Mlp, ParamSet, Tensor, Var};

pub struct Mixer {
    hyper_w1: Mlp,
    hyper_b1: Mlp,
    hyper_w2: Mlp,
    hyper_b2: Mlp,
    pub n_agents: usize,
    pub mix_hidden: usize,
    pub state_dim: usize,
}

impl Mixer {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        n_agents: usize,
        state_dim: usize,
        mix_hidden: usize,
    ) -> Self {
        let hyper_w1 = Mlp::new(
            ps,
            rng,
            "mixer.hw1",
            &[state_dim, 32, n_agents * mix_hidden],
            Act::Relu,
            Act::Identity,
        );
        let hyper_b1 =
            Mlp::new(ps, rng, "mixer.hb1", &[state_dim, 32, mix_hidden], Act::Relu, Act::Identity);
        let hyper_w2 =
            Mlp::new(ps, rng, "mixer.hw2", &[state_dim, 32, mix_hidden], Act::Relu, Act::Identity);
        let hyper_b2 = Mlp::new(ps, rng, "mixer.hb2", &[state_dim, 32, 1], Act::Relu, Act::Identity);
        Mixer { hyper_w1, hyper_b1, hyper_w2, hyper_b2, n_agents, mix_hidden, state_dim }
    }

    /// `q`: `(n x 1)` chosen-action utilities, `state`: `(state_dim x 1)`.
    /// Two-layer monotone mixing; weights pass through `abs`, the hidden
    /// activation is ELU (strictly increasing), so `dQ_tot/dq_i >= 0`.
    pub fn mix(&self, g: &mut Graph, b: &Binding, q: Var, state: Var) -> Var {
        assert_eq!(g.value(q).shape(), (self.n_agents, 1), "one utility per agent");
        let w1_flat = self.hyper_w1.forward(g, b, state);
        let w1_shaped = g.reshape(w1_flat, self.mix_hidden, self.n_agents);
        let w1 = g.abs(w1_shaped);
        let b1 = self.hyper_b1.forward(g, b, state);
        let pre = g.matmul(w1, q);
        let pre = g.add(pre, b1);
        let h = g.elu(pre);
        let w2_col = self.hyper_w2.forward(g, b, state);
        let w2 = g.abs(w2_col);
        let w2_row = g.transpose(w2);
        let out = g.matmul(w2_row, h);
        let b2 = self.hyper_b2.forward(g, b, state);
        g.add(out, b2)
    }

    /// Tensor-level convenience: Q_tot value at fixed parameters.
    pub fn mix_value(&self, theta: &ParamSet, q: &Tensor, state: &Tensor) -> f64 {
        let mut g = Graph::new();
        let b = theta.bind(&mut g);
        let qv = g.constant(q.clone());
        let sv = g.constant(state.clone());
        let out = self.mix(&mut g, &b, qv, sv);
        g.value(out).item()
    }

    /// Analytic gradient of Q_tot w.r.t. the per-agent utilities.
    pub fn grad_wrt_q(&self, theta: &ParamSet, q: &Tensor, state: &Tensor) -> crate::error::Result<Tensor> {
        let mut g = Graph::new();
        let b = theta.bind(&mut g);
        let qv = g.constant(q.clone());
        let sv = g.constant(state.clone());
        let out = self.mix(&mut g, &b, qv, sv);
        let grads = g.backward(out)?;
        Ok(grads.get(qv, q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Owner;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn mixer(n: usize, state_dim: usize, hidden: usize, seed: u64) -> (Mixer, ParamSet) {
        let mut ps = ParamSet::new(Owner::Theta);
        let mut rng = StdRng::seed_from_u64(seed);
        let m = Mixer::new(&mut ps, &mut rng, n, state_dim, hidden);
        (m, ps)
    }

    /// Zero all parameters, then set the final biases of the weight
    /// hypernets so that w1 = [I_n; 0] and w2 = [1...1, 0...]: the mixer
    /// then computes sum(ELU(q_i)), which is sum(q_i) for positive q.
    fn configure_identity(ps: &mut ParamSet, n: usize, hidden: usize) {
        let names = ps.names().to_vec();
        let mut flat = vec![0.0; ps.flat_len()];
        let mut off = 0;
        for (i, t) in ps.tensors().iter().enumerate() {
            if names[i] == "mixer.hw1.l1.b" {
                // row-major (hidden x n): identity block
                for r in 0..n.min(hidden) {
                    flat[off + r * n + r] = 1.0;
                }
            } else if names[i] == "mixer.hw2.l1.b" {
                for r in 0..n.min(hidden) {
                    flat[off + r] = 1.0;
                }
            }
            off += t.len();
        }
        ps.from_flat(&flat);
    }

    #[test]
    fn identity_configuration_sums_utilities() {
        let (m, mut ps) = mixer(3, 4, 8, 0);
        configure_identity(&mut ps, 3, 8);
        let q = Tensor::col(&[1.5, 0.25, 2.0]);
        let state = Tensor::col(&[0.3, -0.4, 0.1, 0.9]);
        let out = m.mix_value(&ps, &q, &state);
        assert!((out - 3.75).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_every_utility() {
        let (m, ps) = mixer(3, 4, 8, 1);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let q = Tensor::randn(3, 1, 2.0, &mut rng);
            let state = Tensor::randn(4, 1, 1.0, &mut rng);
            let grad = m.grad_wrt_q(&ps, &q, &state).unwrap();
            for i in 0..3 {
                assert!(grad.get(i, 0) >= 0.0, "negative mixer gradient {}", grad.get(i, 0));
            }
            // increasing any single q never decreases Q_tot
            let base = m.mix_value(&ps, &q, &state);
            for i in 0..3 {
                let mut q2 = q.clone();
                q2.set(i, 0, q.get(i, 0) + 0.5);
                assert!(m.mix_value(&ps, &q2, &state) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn greedy_actions_match_enumerated_joint_argmax() {
        // monotone mixing: per-agent argmax equals the exhaustive joint
        // argmax of Q_tot over the whole joint action space
        let (m, ps) = mixer(3, 4, 8, 4);
        let mut rng = StdRng::seed_from_u64(11);
        let n_actions = 5;
        for _trial in 0..50 {
            let q = Tensor::randn(n_actions, 3, 1.0, &mut rng);
            let state = Tensor::randn(4, 1, 1.0, &mut rng);
            let greedy: Vec<usize> = (0..3)
                .map(|i| {
                    (0..n_actions)
                        .max_by(|a, b| q.get(*a, i).partial_cmp(&q.get(*b, i)).unwrap())
                        .unwrap()
                })
                .collect();
            let mut best = (vec![0; 3], f64::NEG_INFINITY);
            for a0 in 0..n_actions {
                for a1 in 0..n_actions {
                    for a2 in 0..n_actions {
                        let chosen =
                            Tensor::col(&[q.get(a0, 0), q.get(a1, 1), q.get(a2, 2)]);
                        let v = m.mix_value(&ps, &chosen, &state);
                        if v > best.1 {
                            best = (vec![a0, a1, a2], v);
                        }
                    }
                }
            }
            assert_eq!(best.0, greedy, "joint argmax disagrees with per-agent greedy");
        }
    }

    #[test]
    fn mixer_gradients_match_finite_differences() {
        let (m, ps) = mixer(2, 3, 6, 2);
        let mut rng = StdRng::seed_from_u64(3);
        let q = Tensor::randn(2, 1, 1.0, &mut rng);
        let state = Tensor::randn(3, 1, 1.0, &mut rng);
        let build = |g: &mut Graph, b: &[crate::nn::Binding]| {
            let qv = g.constant(q.clone());
            let sv = g.constant(state.clone());
            let out = m.mix(g, &b[0], qv, sv);
            let sq = g.mul(out, out);
            let probe = crate::nn::check::l2_probe(g, &b[0], 1e-2);
            g.add(sq, probe)
        };
        let err = crate::nn::finite_diff_check(&[&ps], 1e-5, &build).unwrap();
        assert!(err < 1e-4, "rel error {err}");
    }
}
