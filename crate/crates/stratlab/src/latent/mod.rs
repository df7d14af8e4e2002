//! The latent policy: encodes joint histories, emits Gaussian distributions
//! over individual strategies `z_A` and pre-relational strategies `z~_R`,
//! and mixes `z~_R` through a modified graph attention round into the
//! relational strategies `z_R`.

pub mod ppo;

use rand::rngs::StdRng;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::encode::EncodeSpec;
use crate::env::JointTrajectory;
use crate::error::{Error, Result};
use crate::nn::dist::{gaussian_logp, gaussian_logp_value, gaussian_rsample};
use crate::nn::{Act, Binding, Gcn, Graph, Gru, Mlp, ParamSet, Tensor, Var};

pub const SIGMA_FLOOR: f64 = 1e-4;

/// Row-stochastic attention weights over the complete agent graph.
#[derive(Clone, Debug)]
pub struct AttentionMatrix {
    pub alpha: Tensor,
}

impl AttentionMatrix {
    pub fn validate(&self) -> Result<()> {
        let a = &self.alpha;
        if a.rows() != a.cols() {
            return Err(Error::invalid_argument("attention matrix must be square"));
        }
        for r in 0..a.rows() {
            let mut sum = 0.0;
            for c in 0..a.cols() {
                let v = a.get(r, c);
                if v < 0.0 {
                    return Err(Error::invalid_argument("negative attention weight"));
                }
                sum += v;
            }
            if (sum - 1.0).abs() >= 1e-9 {
                return Err(Error::invalid_argument(format!("row {r} sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Per-agent Gaussian parameters emitted by the strategy heads; all tensors
/// are `(d_z x n_agents)`.
#[derive(Clone, Debug)]
pub struct DistParams {
    pub mu_a: Tensor,
    pub sigma_a: Tensor,
    pub mu_r: Tensor,
    pub sigma_r: Tensor,
}

/// A sampled strategy: individual parts `z_A`, pre-relational samples
/// `z~_R`, and their deterministic relational image `z_R`.
#[derive(Clone, Debug)]
pub struct Strategy {
    pub z_a: Tensor,
    pub z_r_pre: Tensor,
    pub z_r: Tensor,
    pub log_prob: f64,
    pub dist: DistParams,
    pub attention: AttentionMatrix,
    /// Latent-policy parameter version at sampling time.
    pub param_version: u64,
}

/// Graph-side view of the same quantities.
pub struct StrategyVars {
    pub z_a: Var,
    pub z_r_pre: Var,
    pub z_r: Var,
    pub log_prob: Var,
    pub alpha: Var,
    pub mu_a: Var,
    pub sigma_a: Var,
    pub mu_r: Var,
    pub sigma_r: Var,
}

pub struct HeadVars {
    pub mu_a: Var,
    pub sigma_a: Var,
    pub mu_r: Var,
    pub sigma_r: Var,
}

#[derive(Clone, Debug)]
pub struct LatentConfig {
    pub n_agents: usize,
    pub enc: EncodeSpec,
    /// Per-part strategy dimensionality.
    pub d_z: usize,
    /// Feature dimension M of the trajectory encoder.
    pub rnn_hidden: usize,
    /// Embedding width of the attention source/destination encoders.
    pub attn_hidden: usize,
    /// Hidden width of the pair-feature MLP and the heads.
    pub mlp_hidden: usize,
    /// `false` replaces the relational mix with the identity (`z_R := z~_R`).
    pub use_gat: bool,
}

impl LatentConfig {
    pub fn new(n_agents: usize, enc: EncodeSpec) -> Self {
        LatentConfig {
            n_agents,
            enc,
            d_z: 16,
            rnn_hidden: 64,
            attn_hidden: 32,
            mlp_hidden: 64,
            use_gat: true,
        }
    }
}

/// The latent policy pi_m. All parameters live in the omega set.
pub struct LatentPolicy {
    pub cfg: LatentConfig,
    enc_gru: Gru,
    enc_gcn: Gcn,
    head_a: Mlp,
    head_r: Mlp,
    att_dst: Gru,
    att_dst_mlp: Mlp,
    att_src: Gru,
    att_src_mlp: Mlp,
    pair_mlp: Mlp,
    /// PPO value baseline; consumes a stop-gradient pooled encoding.
    baseline: Mlp,
}

impl LatentPolicy {
    pub fn new(ps: &mut ParamSet, rng: &mut StdRng, cfg: LatentConfig) -> Self {
        let in_dim = cfg.enc.in_dim();
        let m = cfg.rnn_hidden;
        let enc_gru = Gru::new(ps, rng, "pi_m.enc_gru", in_dim, m);
        let enc_gcn = Gcn::new(ps, rng, "pi_m.enc_gcn", m, m);
        let head_a = Mlp::new(
            ps,
            rng,
            "pi_m.head_a",
            &[m, cfg.mlp_hidden, 2 * cfg.d_z],
            Act::Tanh,
            Act::Identity,
        );
        let head_r = Mlp::new(
            ps,
            rng,
            "pi_m.head_r",
            &[m, cfg.mlp_hidden, 2 * cfg.d_z],
            Act::Tanh,
            Act::Identity,
        );
        let att_dst = Gru::new(ps, rng, "pi_m.att_dst", in_dim, cfg.attn_hidden);
        let att_dst_mlp = Mlp::new(
            ps,
            rng,
            "pi_m.att_dst_mlp",
            &[cfg.attn_hidden, cfg.attn_hidden],
            Act::Tanh,
            Act::Identity,
        );
        let att_src = Gru::new(ps, rng, "pi_m.att_src", in_dim, cfg.attn_hidden);
        let att_src_mlp = Mlp::new(
            ps,
            rng,
            "pi_m.att_src_mlp",
            &[cfg.attn_hidden, cfg.attn_hidden],
            Act::Tanh,
            Act::Identity,
        );
        let pair_mlp = Mlp::new(
            ps,
            rng,
            "pi_m.pair_mlp",
            &[2 * cfg.d_z, cfg.mlp_hidden, cfg.d_z],
            Act::Tanh,
            Act::Identity,
        );
        let baseline = Mlp::new(
            ps,
            rng,
            "pi_m.baseline",
            &[m, cfg.mlp_hidden, 1],
            Act::Tanh,
            Act::Identity,
        );
        LatentPolicy {
            cfg,
            enc_gru,
            enc_gcn,
            head_a,
            head_r,
            att_dst,
            att_dst_mlp,
            att_src,
            att_src_mlp,
            pair_mlp,
            baseline,
        }
    }

    fn step_inputs(&self, g: &mut Graph, traj: &JointTrajectory) -> Vec<Var> {
        self.cfg
            .enc
            .step_matrices(traj)
            .into_iter()
            .map(|t| g.constant(t))
            .collect()
    }

    /// Encode a joint history prefix into per-agent feature columns
    /// `Y = GCN(RNN(tau))`, an `(M x n)` matrix. An empty history encodes
    /// the zero initial hidden state.
    pub fn encode_history(&self, g: &mut Graph, b: &Binding, traj: &JointTrajectory) -> Result<Var> {
        if traj.n_agents() != self.cfg.n_agents {
            return Err(Error::invalid_argument(format!(
                "expected {} agents, trajectory has {}",
                self.cfg.n_agents,
                traj.n_agents()
            )));
        }
        let xs = self.step_inputs(g, traj);
        let x = self.enc_gru.run(g, b, &xs, self.cfg.n_agents);
        Ok(self.enc_gcn.forward(g, b, x))
    }

    /// Per-agent Gaussian parameters from shared heads; sigma is
    /// softplus-activated with a small positive floor.
    pub fn strategy_heads(&self, g: &mut Graph, b: &Binding, y: Var) -> HeadVars {
        let d = self.cfg.d_z;
        let raw_a = self.head_a.forward(g, b, y);
        let raw_r = self.head_r.forward(g, b, y);
        let mu_a = g.slice_rows(raw_a, 0, d);
        let pre_sigma_a = g.slice_rows(raw_a, d, 2 * d);
        let sp_a = g.softplus(pre_sigma_a);
        let sigma_a = g.add_scalar(sp_a, SIGMA_FLOOR);
        let mu_r = g.slice_rows(raw_r, 0, d);
        let pre_sigma_r = g.slice_rows(raw_r, d, 2 * d);
        let sp_r = g.softplus(pre_sigma_r);
        let sigma_r = g.add_scalar(sp_r, SIGMA_FLOOR);
        HeadVars { mu_a, sigma_a, mu_r, sigma_r }
    }

    /// One round of attention-weighted message passing over the complete
    /// agent graph: `alpha_ij = softmax_j <F_d(tau_i), F_s(tau_j)>` and
    /// `z_R^i = S(sum_j alpha_ij F_g([z~_R^i, z~_R^j]))`.
    pub fn relational_mix(
        &self,
        g: &mut Graph,
        b: &Binding,
        traj: &JointTrajectory,
        z_r_pre: Var,
    ) -> (Var, Var) {
        let n = self.cfg.n_agents;
        let xs = self.step_inputs(g, traj);
        let dst_h = self.att_dst.run(g, b, &xs, n);
        let dst = self.att_dst_mlp.forward(g, b, dst_h);
        let src_h = self.att_src.run(g, b, &xs, n);
        let src = self.att_src_mlp.forward(g, b, src_h);
        // logits[i][j] = <dst_i, src_j>
        let dst_t = g.transpose(dst);
        let logits = g.matmul(dst_t, src);
        let alpha = g.softmax_rows(logits);

        if !self.cfg.use_gat {
            return (z_r_pre, alpha);
        }

        let mut z_cols = Vec::with_capacity(n);
        for i in 0..n {
            let zi = g.slice_cols(z_r_pre, i, i + 1);
            let zi_tiled = if n == 1 { zi } else { g.concat_cols(&vec![zi; n]) };
            let pairs = g.concat_rows(&[zi_tiled, z_r_pre]);
            let feats = self.pair_mlp.forward(g, b, pairs); // (d_z x n)
            let alpha_i = g.slice_rows(alpha, i, i + 1); // (1 x n)
            let alpha_i_t = g.transpose(alpha_i); // (n x 1)
            let msg = g.matmul(feats, alpha_i_t); // (d_z x 1)
            z_cols.push(g.sigmoid(msg));
        }
        let z_r = g.concat_cols(&z_cols);
        (z_r, alpha)
    }

    /// Reparameterized sample of `(z_A, z~_R)` plus the deterministic
    /// relational image; `log_prob` covers the sampled parts only.
    pub fn sample_strategy_graph(
        &self,
        g: &mut Graph,
        b: &Binding,
        traj: &JointTrajectory,
        heads: &HeadVars,
        noise_a: &Tensor,
        noise_r: &Tensor,
    ) -> StrategyVars {
        let z_a = gaussian_rsample(g, heads.mu_a, heads.sigma_a, noise_a);
        let z_r_pre = gaussian_rsample(g, heads.mu_r, heads.sigma_r, noise_r);
        let lp_a = gaussian_logp(g, z_a, heads.mu_a, heads.sigma_a);
        let lp_r = gaussian_logp(g, z_r_pre, heads.mu_r, heads.sigma_r);
        let log_prob = g.add(lp_a, lp_r);
        let (z_r, alpha) = self.relational_mix(g, b, traj, z_r_pre);
        StrategyVars {
            z_a,
            z_r_pre,
            z_r,
            log_prob,
            alpha,
            mu_a: heads.mu_a,
            sigma_a: heads.sigma_a,
            mu_r: heads.mu_r,
            sigma_r: heads.sigma_r,
        }
    }

    /// Log-density of a fixed, previously sampled `(z_A, z~_R)` under the
    /// current parameters (PPO ratio numerator).
    pub fn log_prob_of(
        &self,
        g: &mut Graph,
        heads: &HeadVars,
        z_a: &Tensor,
        z_r_pre: &Tensor,
    ) -> Var {
        let za = g.constant(z_a.clone());
        let zr = g.constant(z_r_pre.clone());
        let lp_a = gaussian_logp(g, za, heads.mu_a, heads.sigma_a);
        let lp_r = gaussian_logp(g, zr, heads.mu_r, heads.sigma_r);
        g.add(lp_a, lp_r)
    }

    /// Plain-tensor sampling path used during rollouts.
    pub fn sample_strategy(
        &self,
        omega: &ParamSet,
        traj: &JointTrajectory,
        rng: &mut StdRng,
    ) -> Result<Strategy> {
        let (d, n) = (self.cfg.d_z, self.cfg.n_agents);
        let noise_a = Tensor::from_fn(d, n, |_, _| rng.sample(StandardNormal));
        let noise_r = Tensor::from_fn(d, n, |_, _| rng.sample(StandardNormal));
        self.strategy_from_noise(omega, traj, &noise_a, &noise_r)
    }

    /// Deterministic strategy at the distribution means (zero noise); used
    /// for greedy evaluation.
    pub fn mean_strategy(&self, omega: &ParamSet, traj: &JointTrajectory) -> Result<Strategy> {
        let (d, n) = (self.cfg.d_z, self.cfg.n_agents);
        let zero = Tensor::zeros(d, n);
        self.strategy_from_noise(omega, traj, &zero, &zero.clone())
    }

    pub fn strategy_from_noise(
        &self,
        omega: &ParamSet,
        traj: &JointTrajectory,
        noise_a: &Tensor,
        noise_r: &Tensor,
    ) -> Result<Strategy> {
        let mut g = Graph::new();
        let b = omega.bind(&mut g);
        let y = self.encode_history(&mut g, &b, traj)?;
        let heads = self.strategy_heads(&mut g, &b, y);
        let vars = self.sample_strategy_graph(&mut g, &b, traj, &heads, noise_a, noise_r);
        let strategy = Strategy {
            z_a: g.value(vars.z_a).clone(),
            z_r_pre: g.value(vars.z_r_pre).clone(),
            z_r: g.value(vars.z_r).clone(),
            log_prob: g.value(vars.log_prob).item(),
            dist: DistParams {
                mu_a: g.value(vars.mu_a).clone(),
                sigma_a: g.value(vars.sigma_a).clone(),
                mu_r: g.value(vars.mu_r).clone(),
                sigma_r: g.value(vars.sigma_r).clone(),
            },
            attention: AttentionMatrix { alpha: g.value(vars.alpha).clone() },
            param_version: omega.version(),
        };
        debug_assert!(strategy.log_prob.is_finite());
        Ok(strategy)
    }

    /// Pooled encoding (mean over agents) as a plain tensor; the PPO value
    /// baseline consumes this detached from the encoder.
    pub fn pooled_encoding(&self, omega: &ParamSet, traj: &JointTrajectory) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = omega.bind(&mut g);
        let y = self.encode_history(&mut g, &b, traj)?;
        let yv = g.value(y);
        let mut pooled = Tensor::zeros(yv.rows(), 1);
        for r in 0..yv.rows() {
            let mean = (0..yv.cols()).map(|c| yv.get(r, c)).sum::<f64>() / yv.cols() as f64;
            pooled.set(r, 0, mean);
        }
        Ok(pooled)
    }

    /// Value baseline on a detached pooled encoding.
    pub fn baseline_value(&self, g: &mut Graph, b: &Binding, pooled: &Tensor) -> Var {
        let x = g.constant(pooled.clone());
        self.baseline.forward(g, b, x)
    }

    pub fn baseline_param_names(&self) -> &'static str {
        "pi_m.baseline"
    }
}

/// Reparameterized sample from explicit Gaussian parameters (tensor level).
pub fn sample_from_params(mu: &Tensor, sigma: &Tensor, rng: &mut StdRng) -> Tensor {
    assert_eq!(mu.shape(), sigma.shape());
    let mut out = mu.clone();
    for i in 0..out.len() {
        let eps: f64 = rng.sample(StandardNormal);
        out.data_mut()[i] = mu.data()[i] + sigma.data()[i] * eps;
    }
    out
}

/// Closed-form log-density of a recorded strategy under stored parameters.
pub fn strategy_logp_value(strategy: &Strategy) -> f64 {
    gaussian_logp_value(&strategy.z_a, &strategy.dist.mu_a, &strategy.dist.sigma_a)
        + gaussian_logp_value(&strategy.z_r_pre, &strategy.dist.mu_r, &strategy.dist.sigma_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, Owner};
    use rand::SeedableRng;

    fn toy_traj(n: usize, len: usize, seed: u64) -> JointTrajectory {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut t = JointTrajectory::new(n);
        for step in 0..len {
            let obs: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let acts: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            t.push_step(&obs, &acts, 0.0, step + 1 == len);
        }
        t
    }

    fn small_policy(n: usize, seed: u64) -> (LatentPolicy, ParamSet) {
        let mut ps = ParamSet::new(Owner::Omega);
        let mut rng = StdRng::seed_from_u64(seed);
        let mut cfg = LatentConfig::new(n, EncodeSpec::rl(2, 3));
        cfg.d_z = 3;
        cfg.rnn_hidden = 8;
        cfg.attn_hidden = 6;
        cfg.mlp_hidden = 8;
        let lp = LatentPolicy::new(&mut ps, &mut rng, cfg);
        (lp, ps)
    }

    #[test]
    fn empty_history_is_well_defined() {
        let (lp, ps) = small_policy(2, 0);
        let traj = JointTrajectory::new(2);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let y = lp.encode_history(&mut g, &b, &traj).unwrap();
        assert_eq!(g.value(y).shape(), (8, 2));
        assert!(g.value(y).is_finite());
    }

    #[test]
    fn agent_count_mismatch_rejected() {
        let (lp, ps) = small_policy(2, 0);
        let traj = toy_traj(3, 2, 0);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        assert!(matches!(
            lp.encode_history(&mut g, &b, &traj),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn identical_histories_give_identical_head_params() {
        let (lp, ps) = small_policy(3, 1);
        // all agents share the same per-step obs/action
        let mut traj = JointTrajectory::new(3);
        for step in 0..4 {
            let obs = vec![vec![0.3 * step as f64, -0.1]; 3];
            traj.push_step(&obs, &[1, 1, 1], 0.0, step == 3);
        }
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let y = lp.encode_history(&mut g, &b, &traj).unwrap();
        let heads = lp.strategy_heads(&mut g, &b, y);
        for var in [heads.mu_a, heads.sigma_a, heads.mu_r, heads.sigma_r] {
            let v = g.value(var);
            for r in 0..v.rows() {
                for c in 1..v.cols() {
                    assert!((v.get(r, c) - v.get(r, 0)).abs() < 1e-12);
                }
            }
        }
        // identical trajectories -> uniform attention
        let zr = g.constant(Tensor::zeros(3, 3));
        let (_, alpha) = lp.relational_mix(&mut g, &b, &traj, zr);
        let a = g.value(alpha);
        for r in 0..3 {
            for c in 0..3 {
                assert!((a.get(r, c) - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singleton_attention_is_one() {
        let (lp, ps) = small_policy(1, 2);
        let traj = toy_traj(1, 3, 5);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let zr = g.constant(Tensor::zeros(3, 1));
        let (_, alpha) = lp.relational_mix(&mut g, &b, &traj, zr);
        assert!((g.value(alpha).item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_pair_mlp_gives_half_z_r() {
        let (lp, mut ps) = small_policy(2, 3);
        // zero the pair MLP parameters only
        let names = ps.names().to_vec();
        let mut flat = ps.to_flat();
        let mut off = 0;
        for (i, t) in ps.tensors().iter().enumerate() {
            if names[i].starts_with("pi_m.pair_mlp") {
                flat[off..off + t.len()].iter_mut().for_each(|x| *x = 0.0);
            }
            off += t.len();
        }
        ps.from_flat(&flat);
        let traj = toy_traj(2, 2, 7);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let zr_pre = g.constant(Tensor::zeros(3, 2));
        let (z_r, _) = lp.relational_mix(&mut g, &b, &traj, zr_pre);
        for &v in g.value(z_r).data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_rows_are_probability_vectors() {
        let (lp, ps) = small_policy(3, 4);
        for seed in 0..5 {
            let traj = toy_traj(3, 4, seed);
            let mut rng = StdRng::seed_from_u64(seed);
            let strat = lp.sample_strategy(&ps, &traj, &mut rng).unwrap();
            strat.attention.validate().unwrap();
            // z_R strictly inside (0,1)
            assert!(strat.z_r.data().iter().all(|&v| v > 0.0 && v < 1.0));
            // sigma strictly positive
            assert!(strat.dist.sigma_a.data().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn log_prob_matches_closed_form() {
        let (lp, ps) = small_policy(2, 5);
        let traj = toy_traj(2, 3, 11);
        let mut rng = StdRng::seed_from_u64(13);
        let strat = lp.sample_strategy(&ps, &traj, &mut rng).unwrap();
        let closed = strategy_logp_value(&strat);
        assert!((strat.log_prob - closed).abs() < 1e-10);
    }

    #[test]
    fn fixed_seed_reproducible_and_sigma_to_zero_limit() {
        let (lp, ps) = small_policy(2, 6);
        let traj = toy_traj(2, 2, 17);
        let mut r1 = StdRng::seed_from_u64(99);
        let mut r2 = StdRng::seed_from_u64(99);
        let s1 = lp.sample_strategy(&ps, &traj, &mut r1).unwrap();
        let s2 = lp.sample_strategy(&ps, &traj, &mut r2).unwrap();
        assert_eq!(s1.z_a, s2.z_a);
        assert_eq!(s1.z_r, s2.z_r);

        // sigma -> 0 limit: sample = mu
        let mut rng = StdRng::seed_from_u64(0);
        let mu = Tensor::from_fn(3, 2, |r, c| (r + c) as f64);
        let sigma = Tensor::full(3, 2, 1e-300);
        let s = sample_from_params(&mu, &sigma, &mut rng);
        for i in 0..s.len() {
            assert!((s.data()[i] - mu.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_mean_of_samples_matches_mu() {
        // Monte-Carlo oracle: 1e5 samples, per-coordinate error < 3 sigma / sqrt(N)
        let mu = Tensor::col(&[0.7, -1.2]);
        let sigma = Tensor::col(&[0.5, 1.5]);
        let n = 100_000;
        let mut rng = StdRng::seed_from_u64(2024);
        let mut acc = vec![0.0; 2];
        for _ in 0..n {
            let s = sample_from_params(&mu, &sigma, &mut rng);
            acc[0] += s.data()[0];
            acc[1] += s.data()[1];
        }
        for i in 0..2 {
            let mean = acc[i] / n as f64;
            let tol = 3.0 * sigma.data()[i] / (n as f64).sqrt();
            assert!(
                (mean - mu.data()[i]).abs() < tol,
                "coord {i}: mean {mean} vs mu {} (tol {tol})",
                mu.data()[i]
            );
        }
    }

    #[test]
    fn permutation_equivariance_of_heads() {
        let (lp, ps) = small_policy(3, 7);
        let traj = toy_traj(3, 3, 23);
        let perm = [2usize, 0, 1];
        let mut permuted = JointTrajectory::new(3);
        for t in 0..traj.len() {
            let obs: Vec<Vec<f64>> =
                perm.iter().map(|&p| traj.per_agent[p].steps[t].obs.clone()).collect();
            let acts: Vec<usize> = perm.iter().map(|&p| traj.per_agent[p].steps[t].action).collect();
            permuted.push_step(&obs, &acts, traj.rewards[t], traj.done_mask[t]);
        }

        let heads_of = |tr: &JointTrajectory| {
            let mut g = Graph::new();
            let b = ps.bind(&mut g);
            let y = lp.encode_history(&mut g, &b, tr).unwrap();
            let h = lp.strategy_heads(&mut g, &b, y);
            (g.value(h.mu_a).clone(), g.value(h.sigma_a).clone())
        };
        let (mu, sigma) = heads_of(&traj);
        let (mu_p, sigma_p) = heads_of(&permuted);
        for r in 0..mu.rows() {
            for c in 0..3 {
                assert!((mu_p.get(r, c) - mu.get(r, perm[c])).abs() < 1e-12);
                assert!((sigma_p.get(r, c) - sigma.get(r, perm[c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reparameterized_grads_match_finite_differences() {
        // E[|z|^2] via a single reparameterized sample: gradient w.r.t. head
        // parameters must match central differences.
        let (lp, ps) = small_policy(2, 8);
        let traj = toy_traj(2, 2, 31);
        let mut rng = StdRng::seed_from_u64(7);
        let noise_a = Tensor::from_fn(3, 2, |_, _| rng.sample(StandardNormal));
        let noise_r = Tensor::from_fn(3, 2, |_, _| rng.sample(StandardNormal));
        let z_path = |g: &mut Graph, b: &[Binding]| {
            let y = lp.encode_history(g, &b[0], &traj).unwrap();
            let heads = lp.strategy_heads(g, &b[0], y);
            let vars = lp.sample_strategy_graph(g, &b[0], &traj, &heads, &noise_a, &noise_r);
            let za_sq = g.sum_sq(vars.z_a);
            let zr_sq = g.sum_sq(vars.z_r);
            g.add(za_sq, zr_sq)
        };
        let (_, grads) = crate::nn::grad(&[&ps], &z_path).unwrap();
        let total: f64 = grads[0].iter().map(|t| t.data().iter().map(|x| x.abs()).sum::<f64>()).sum();
        assert!(total > 1e-6, "gradient must be nonzero, got {total}");

        let build = |g: &mut Graph, b: &[Binding]| {
            let z_loss = z_path(g, b);
            let probe = crate::nn::check::l2_probe(g, &b[0], 1e-2);
            g.add(z_loss, probe)
        };
        let err = finite_diff_check(&[&ps], 1e-5, &build).unwrap();
        assert!(err < 1e-4, "rel error {err}");
    }
}
