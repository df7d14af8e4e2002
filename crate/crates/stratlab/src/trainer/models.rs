//! The full model bundle: one parameter set per owner tag, the networks
//! that live in them, and checkpointing for the lot.

use rand::rngs::StdRng;
use rand::SeedableRng;
use std::path::Path;

use crate::encode::EncodeSpec;
use crate::error::Result;
use crate::latent::{LatentConfig, LatentPolicy};
use crate::nn::blocks::{Act, Gru, Mlp};
use crate::nn::{checkpoint, Binding, Graph, Owner, ParamSet, Tensor, Var};
use crate::predict::posterior::{ObsLikelihood, ObsPosterior, ObsPosteriorConfig, StrategyPosterior};
use crate::predict::{DecodeStyle, PredictorConfig, SegmentPredictor};
use crate::value::{MarginalModels, Mixer, UtilityNets, ValueConfig};

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub n_agents: usize,
    pub enc: EncodeSpec,
    pub state_dim: usize,
    pub d_z: usize,
    /// Trajectory-encoder feature width M.
    pub rnn_hidden: usize,
    pub attn_hidden: usize,
    pub mlp_hidden: usize,
    /// Utility-network GRU width.
    pub value_hidden: usize,
    pub mix_hidden: usize,
    /// Conv channels of predictor/posteriors.
    pub channels: usize,
    pub ctx_dim: usize,
    pub dilations: Vec<usize>,
    pub decode: DecodeStyle,
    pub obs_vocab: Option<Vec<Vec<f64>>>,
    pub use_gat: bool,
}

impl ModelConfig {
    pub fn new(n_agents: usize, enc: EncodeSpec, state_dim: usize) -> Self {
        ModelConfig {
            n_agents,
            enc,
            state_dim,
            d_z: 16,
            rnn_hidden: 64,
            attn_hidden: 32,
            mlp_hidden: 64,
            value_hidden: 64,
            mix_hidden: 32,
            channels: 32,
            ctx_dim: 32,
            dilations: vec![1, 2, 4],
            decode: DecodeStyle::Direct,
            obs_vocab: None,
            use_gat: true,
        }
    }

    fn likelihood(&self) -> ObsLikelihood {
        match &self.obs_vocab {
            Some(vocab) => ObsLikelihood::Categorical { vocab: vocab.clone() },
            None => ObsLikelihood::Gaussian { decode: self.decode },
        }
    }
}

/// Segment-return regressor for imagined rollouts.
pub struct RewardHead {
    gru: Gru,
    head: Mlp,
    n_agents: usize,
}

impl RewardHead {
    pub fn new(ps: &mut ParamSet, rng: &mut StdRng, in_dim: usize, hidden: usize, n_agents: usize) -> Self {
        let gru = Gru::new(ps, rng, "r_hat.gru", in_dim, hidden);
        let head = Mlp::new(ps, rng, "r_hat.head", &[hidden, 1], Act::Relu, Act::Identity);
        RewardHead { gru, head, n_agents }
    }

    /// Predicted summed extrinsic return of a segment given its per-step
    /// `(in_dim x n)` input matrices.
    pub fn predict_graph(&self, g: &mut Graph, b: &Binding, seg_steps: &[Var]) -> Var {
        let h = self.gru.run(g, b, seg_steps, self.n_agents);
        let pool = g.constant(Tensor::full(self.n_agents, 1, 1.0 / self.n_agents as f64));
        let pooled = g.matmul(h, pool);
        self.head.forward(g, b, pooled)
    }

    pub fn predict_value(&self, ps: &ParamSet, seg_steps: &[Tensor]) -> f64 {
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let vars: Vec<Var> = seg_steps.iter().map(|t| g.constant(t.clone())).collect();
        let out = self.predict_graph(&mut g, &b, &vars);
        g.value(out).item()
    }
}

pub struct Models {
    pub cfg: ModelConfig,
    pub latent: LatentPolicy,
    pub omega: ParamSet,
    pub predictor: SegmentPredictor,
    pub eta: ParamSet,
    pub obs_post: ObsPosterior,
    pub phi: ParamSet,
    pub strat_post: StrategyPosterior,
    pub xi: ParamSet,
    pub qnets: UtilityNets,
    pub mixer: Mixer,
    pub theta: ParamSet,
    pub marginals: MarginalModels,
    pub psi_marginals: ParamSet,
    pub reward_head: RewardHead,
    pub psi_reward: ParamSet,
}

impl Models {
    pub fn new(cfg: ModelConfig, seed: u64) -> Models {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut omega = ParamSet::new(Owner::Omega);
        let mut latent_cfg = LatentConfig::new(cfg.n_agents, cfg.enc.clone());
        latent_cfg.d_z = cfg.d_z;
        latent_cfg.rnn_hidden = cfg.rnn_hidden;
        latent_cfg.attn_hidden = cfg.attn_hidden;
        latent_cfg.mlp_hidden = cfg.mlp_hidden;
        latent_cfg.use_gat = cfg.use_gat;
        let latent = LatentPolicy::new(&mut omega, &mut rng, latent_cfg);

        let mut eta = ParamSet::new(Owner::Eta);
        let mut pred_cfg = PredictorConfig::new(cfg.n_agents, cfg.enc.clone(), cfg.d_z);
        pred_cfg.channels = cfg.channels;
        pred_cfg.ctx_dim = cfg.ctx_dim;
        pred_cfg.dilations = cfg.dilations.clone();
        pred_cfg.decode = cfg.decode;
        let predictor = SegmentPredictor::new(&mut eta, &mut rng, pred_cfg);

        let mut phi = ParamSet::new(Owner::Phi);
        let mut obs_cfg = ObsPosteriorConfig::new(cfg.n_agents, cfg.enc.clone(), cfg.d_z);
        obs_cfg.channels = cfg.channels;
        obs_cfg.ctx_dim = cfg.ctx_dim;
        obs_cfg.dilations = cfg.dilations.clone();
        obs_cfg.likelihood = cfg.likelihood();
        let obs_post = ObsPosterior::new(&mut phi, &mut rng, "q_phi", obs_cfg);

        let mut xi = ParamSet::new(Owner::Xi);
        let strat_post = StrategyPosterior::new(
            &mut xi,
            &mut rng,
            cfg.n_agents,
            cfg.enc.clone(),
            cfg.d_z,
            cfg.rnn_hidden,
        );

        let mut theta = ParamSet::new(Owner::Theta);
        let mut value_cfg = ValueConfig::new(cfg.n_agents, cfg.enc.clone(), cfg.d_z);
        value_cfg.hidden = cfg.value_hidden;
        let qnets = UtilityNets::new(&mut theta, &mut rng, value_cfg);
        let mixer = Mixer::new(&mut theta, &mut rng, cfg.n_agents, cfg.state_dim, cfg.mix_hidden);

        let mut psi_marginals = ParamSet::new(Owner::Psi);
        let marginals = MarginalModels::new(
            &mut psi_marginals,
            &mut rng,
            cfg.n_agents,
            cfg.enc.clone(),
            cfg.ctx_dim,
            cfg.channels,
            &cfg.dilations,
            cfg.likelihood(),
        );

        let mut psi_reward = ParamSet::new(Owner::Psi);
        let reward_head =
            RewardHead::new(&mut psi_reward, &mut rng, cfg.enc.in_dim(), cfg.ctx_dim, cfg.n_agents);

        Models {
            cfg,
            latent,
            omega,
            predictor,
            eta,
            obs_post,
            phi,
            strat_post,
            xi,
            qnets,
            mixer,
            theta,
            marginals,
            psi_marginals,
            reward_head,
            psi_reward,
        }
    }

    pub fn save(&self, base: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(
            base,
            &[
                &self.omega,
                &self.eta,
                &self.phi,
                &self.xi,
                &self.theta,
                &self.psi_marginals,
                &self.psi_reward,
            ],
        )
    }

    pub fn load(&mut self, base: impl AsRef<Path>) -> Result<()> {
        checkpoint::load_into(
            base,
            &mut [
                &mut self.omega,
                &mut self.eta,
                &mut self.phi,
                &mut self.xi,
                &mut self.theta,
                &mut self.psi_marginals,
                &mut self.psi_reward,
            ],
        )
    }

    /// Per-agent conditioning vectors `[z_A^i; z_R^i]`.
    pub fn z_cond(&self, strategy: &crate::latent::Strategy) -> Vec<Tensor> {
        (0..self.cfg.n_agents)
            .map(|i| {
                let mut v = Vec::with_capacity(2 * self.cfg.d_z);
                for r in 0..self.cfg.d_z {
                    v.push(strategy.z_a.get(r, i));
                }
                for r in 0..self.cfg.d_z {
                    v.push(strategy.z_r.get(r, i));
                }
                Tensor::col(&v)
            })
            .collect()
    }
}
