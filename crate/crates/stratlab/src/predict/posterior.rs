//! Variational posterior estimators.
//!
//! `q_phi` scores next observations given the action, history and strategy
//! (diagonal Gaussian for continuous observations, categorical over a finite
//! vocabulary for discrete ones). `q_xi` scores strategies given the segment
//! that followed, via a forward RNN over the history and a backward RNN over
//! the segment. The same conv trunk with zero-width conditioning doubles as
//! the z-free marginal transition model.

use rand::rngs::StdRng;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::encode::EncodeSpec;
use crate::env::{JointTrajectory, Segment};
use crate::error::{Error, Result};
use crate::nn::dist::{categorical_logp, gaussian_logp};
use crate::nn::{Act, Binding, Gcn, Graph, Gru, Mlp, ParamSet, RmsProp, Tensor, Var};

use super::{ConvSeqCore, DecodeStyle};

pub const SIGMA_FLOOR: f64 = 1e-4;

/// Observation likelihood family.
#[derive(Clone, Debug)]
pub enum ObsLikelihood {
    /// Diagonal Gaussian over observation vectors.
    Gaussian { decode: DecodeStyle },
    /// Categorical over a finite observation vocabulary.
    Categorical { vocab: Vec<Vec<f64>> },
}

#[derive(Clone, Debug)]
pub struct ObsPosteriorConfig {
    pub n_agents: usize,
    pub enc: EncodeSpec,
    /// Conditioning width; `2 * d_z` for `q_phi`, 0 for the marginal model.
    pub cond_dim: usize,
    pub channels: usize,
    pub ctx_dim: usize,
    pub dilations: Vec<usize>,
    pub likelihood: ObsLikelihood,
}

impl ObsPosteriorConfig {
    pub fn new(n_agents: usize, enc: EncodeSpec, d_z: usize) -> Self {
        ObsPosteriorConfig {
            n_agents,
            enc,
            cond_dim: 2 * d_z,
            channels: 32,
            ctx_dim: 32,
            dilations: vec![1, 2, 4],
            likelihood: ObsLikelihood::Gaussian { decode: DecodeStyle::Direct },
        }
    }
}

/// Targets for one segment's observation scoring: for position p < s-1 the
/// segment's next step, for the last position the joint observation that
/// followed the segment (when the episode continued).
pub struct ObsTargets {
    /// `(target joint obs, position)` pairs actually scored.
    pub entries: Vec<(Vec<Vec<f64>>, usize)>,
}

pub fn obs_targets(segment: &Segment, next_obs: Option<&Vec<Vec<f64>>>) -> ObsTargets {
    let s = segment.seg_len();
    let n = segment.per_agent.len();
    let mut entries = Vec::new();
    for p in 0..s {
        if !segment.valid_mask[p] {
            continue;
        }
        if p + 1 < s {
            if segment.valid_mask[p + 1] {
                let obs: Vec<Vec<f64>> =
                    (0..n).map(|i| segment.per_agent[i][p + 1].obs.clone()).collect();
                entries.push((obs, p));
            }
        } else if let Some(next) = next_obs {
            entries.push((next.clone(), p));
        }
    }
    ObsTargets { entries }
}

/// The observation posterior / marginal transition model.
pub struct ObsPosterior {
    pub cfg: ObsPosteriorConfig,
    core: ConvSeqCore,
    mean_head: Option<Mlp>,
    sigma_head: Option<Mlp>,
    logit_head: Option<Mlp>,
}

impl ObsPosterior {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, prefix: &str, cfg: ObsPosteriorConfig) -> Self {
        let core = ConvSeqCore::new(
            ps,
            rng,
            prefix,
            cfg.enc.in_dim(),
            cfg.channels,
            cfg.ctx_dim,
            &cfg.dilations,
            cfg.cond_dim,
        );
        let (mean_head, sigma_head, logit_head) = match &cfg.likelihood {
            ObsLikelihood::Gaussian { decode } => {
                let out_dim = match decode {
                    DecodeStyle::Direct => cfg.enc.obs_dim,
                    DecodeStyle::Kinematic { .. } => {
                        assert_eq!(cfg.enc.obs_dim, 4, "kinematic decode expects [pos(2); vel(2)]");
                        2
                    }
                };
                (
                    Some(Mlp::new(ps, rng, &format!("{prefix}.mean"), &[cfg.channels, out_dim], Act::Tanh, Act::Identity)),
                    Some(Mlp::new(ps, rng, &format!("{prefix}.sigma"), &[cfg.channels, cfg.enc.obs_dim], Act::Tanh, Act::Identity)),
                    None,
                )
            }
            ObsLikelihood::Categorical { vocab } => (
                None,
                None,
                Some(Mlp::new(ps, rng, &format!("{prefix}.logits"), &[cfg.channels, vocab.len()], Act::Tanh, Act::Identity)),
            ),
        };
        ObsPosterior { cfg, core, mean_head, sigma_head, logit_head }
    }

    pub fn is_conditioned(&self) -> bool {
        self.cfg.cond_dim > 0
    }

    fn segment_inputs(&self, g: &mut Graph, segment: &Segment, agent: usize) -> Var {
        let enc = &self.cfg.enc;
        let cols: Vec<Tensor> = (0..segment.seg_len())
            .map(|p| Tensor::col(&enc.step_vec(&segment.per_agent[agent][p])))
            .collect();
        g.constant(Tensor::from_columns(&cols))
    }

    fn vocab_index(&self, obs: &[f64]) -> Result<usize> {
        let ObsLikelihood::Categorical { vocab } = &self.cfg.likelihood else {
            return Err(Error::invalid_argument("not a categorical likelihood"));
        };
        vocab
            .iter()
            .position(|v| {
                v.len() == obs.len() && v.iter().zip(obs).all(|(a, b)| (a - b).abs() < 1e-9)
            })
            .ok_or_else(|| Error::invalid_argument("observation not in vocabulary"))
    }

    /// Summed log q(o_{t+1} | a_t, tau_t; z) over the scored positions of a
    /// segment, for all agents. `z[i]` may be graph-connected or constant;
    /// `None` for the unconditioned marginal model.
    pub fn logp_segment_graph(
        &self,
        g: &mut Graph,
        b: &Binding,
        history: &JointTrajectory,
        segment: &Segment,
        targets: &ObsTargets,
        z: Option<&[Var]>,
    ) -> Result<Var> {
        let n = self.cfg.n_agents;
        if let Some(z) = z {
            if z.len() != n {
                return Err(Error::invalid_argument("one conditioning vector per agent"));
            }
        }
        let hist_steps: Vec<Var> = self
            .cfg
            .enc
            .step_matrices(history)
            .into_iter()
            .map(|t| g.constant(t))
            .collect();
        let ctx = self.core.context(g, b, &hist_steps, n);
        let mut terms: Vec<Var> = Vec::new();
        for i in 0..n {
            let x = self.segment_inputs(g, segment, i);
            let ctx_i = g.slice_cols(ctx, i, i + 1);
            let cond = z.map(|z| z[i]);
            let feats = self.core.features(g, b, x, ctx_i, cond);
            match &self.cfg.likelihood {
                ObsLikelihood::Gaussian { decode } => {
                    let mean_all = match decode {
                        DecodeStyle::Direct => self.mean_head.as_ref().unwrap().forward(g, b, feats),
                        DecodeStyle::Kinematic { dt } => {
                            let delta_v = self.mean_head.as_ref().unwrap().forward(g, b, feats);
                            let prev_pos = g.slice_rows(x, 0, 2);
                            let prev_vel = g.slice_rows(x, 2, 4);
                            let vel = g.add(prev_vel, delta_v);
                            let step = g.scale(vel, *dt);
                            let pos = g.add(prev_pos, step);
                            g.concat_rows(&[pos, vel])
                        }
                    };
                    let raw_sigma = self.sigma_head.as_ref().unwrap().forward(g, b, feats);
                    let sp = g.softplus(raw_sigma);
                    let sigma_all = g.add_scalar(sp, SIGMA_FLOOR);
                    for (obs, p) in &targets.entries {
                        let mu = g.slice_cols(mean_all, *p, p + 1);
                        let sigma = g.slice_cols(sigma_all, *p, p + 1);
                        let target = g.constant(Tensor::col(&obs[i]));
                        terms.push(gaussian_logp(g, target, mu, sigma));
                    }
                }
                ObsLikelihood::Categorical { vocab } => {
                    let logits_all = self.logit_head.as_ref().unwrap().forward(g, b, feats);
                    for (obs, p) in &targets.entries {
                        let idx = self.vocab_index(&obs[i])?;
                        let logits = g.slice_cols(logits_all, *p, p + 1);
                        let mut onehot = Tensor::zeros(vocab.len(), 1);
                        onehot.set(idx, 0, 1.0);
                        terms.push(categorical_logp(g, logits, &onehot));
                    }
                }
            }
        }
        if terms.is_empty() {
            return Ok(g.scalar(0.0));
        }
        let stacked = g.concat_rows(&terms);
        Ok(g.sum_all(stacked))
    }

    /// Tensor-level sampling of the next joint observation (used by the
    /// no-prediction-model ablation that decodes through `q_phi`).
    pub fn sample_next_obs(
        &self,
        params: &ParamSet,
        history: &JointTrajectory,
        segment_so_far: &Segment,
        z: Option<&[Tensor]>,
        rng: &mut StdRng,
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.cfg.n_agents;
        let p_last = segment_so_far.seg_len() - 1;
        let mut g = Graph::new();
        let b = params.bind(&mut g);
        let hist_steps: Vec<Var> = self
            .cfg
            .enc
            .step_matrices(history)
            .into_iter()
            .map(|t| g.constant(t))
            .collect();
        let ctx = self.core.context(&mut g, &b, &hist_steps, n);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let x = self.segment_inputs(&mut g, segment_so_far, i);
            let ctx_i = g.slice_cols(ctx, i, i + 1);
            let cond = match z {
                Some(zs) => Some(g.constant(zs[i].clone())),
                None => None,
            };
            let feats = self.core.features(&mut g, &b, x, ctx_i, cond);
            match &self.cfg.likelihood {
                ObsLikelihood::Gaussian { decode } => {
                    let mean_all = match decode {
                        DecodeStyle::Direct => self.mean_head.as_ref().unwrap().forward(&mut g, &b, feats),
                        DecodeStyle::Kinematic { dt } => {
                            let delta_v = self.mean_head.as_ref().unwrap().forward(&mut g, &b, feats);
                            let prev_pos = g.slice_rows(x, 0, 2);
                            let prev_vel = g.slice_rows(x, 2, 4);
                            let vel = g.add(prev_vel, delta_v);
                            let step = g.scale(vel, *dt);
                            let pos = g.add(prev_pos, step);
                            g.concat_rows(&[pos, vel])
                        }
                    };
                    let raw_sigma = self.sigma_head.as_ref().unwrap().forward(&mut g, &b, feats);
                    let sp = g.softplus(raw_sigma);
                    let sigma_all = g.add_scalar(sp, SIGMA_FLOOR);
                    let mu = g.value(mean_all).column(p_last);
                    let sigma = g.value(sigma_all).column(p_last);
                    let mut obs = Vec::with_capacity(mu.len());
                    for d in 0..mu.len() {
                        let eps: f64 = rng.sample(StandardNormal);
                        obs.push(mu.data()[d] + sigma.data()[d] * eps);
                    }
                    out.push(obs);
                }
                ObsLikelihood::Categorical { vocab } => {
                    let logits_all = self.logit_head.as_ref().unwrap().forward(&mut g, &b, feats);
                    let probs = g.softmax_cols(logits_all);
                    let pv = g.value(probs);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = vocab.len() - 1;
                    for v in 0..vocab.len() {
                        acc += pv.get(v, p_last);
                        if u <= acc {
                            chosen = v;
                            break;
                        }
                    }
                    out.push(vocab[chosen].clone());
                }
            }
        }
        Ok(out)
    }
}

/// The strategy posterior `q_xi(z | zeta, tau)`: forward RNN over the
/// history, backward RNN over the segment, GCN over the complete graph,
/// shared Gaussian heads.
pub struct StrategyPosterior {
    pub n_agents: usize,
    pub enc: EncodeSpec,
    pub d_z: usize,
    fwd: Gru,
    bwd: Gru,
    gcn: Gcn,
    head_a: Mlp,
    head_r: Mlp,
}

impl StrategyPosterior {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        n_agents: usize,
        enc: EncodeSpec,
        d_z: usize,
        hidden: usize,
    ) -> Self {
        let in_dim = enc.in_dim();
        let fwd = Gru::new(ps, rng, "q_xi.fwd", in_dim, hidden);
        let bwd = Gru::new(ps, rng, "q_xi.bwd", in_dim, hidden);
        let gcn = Gcn::new(ps, rng, "q_xi.gcn", 2 * hidden, 2 * hidden);
        let head_a = Mlp::new(ps, rng, "q_xi.head_a", &[2 * hidden, hidden, 2 * d_z], Act::Tanh, Act::Identity);
        let head_r = Mlp::new(ps, rng, "q_xi.head_r", &[2 * hidden, hidden, 2 * d_z], Act::Tanh, Act::Identity);
        StrategyPosterior { n_agents, enc, d_z, fwd, bwd, gcn, head_a, head_r }
    }

    /// Gaussian parameters of the posterior, each `(d_z x n)`.
    pub fn heads_graph(
        &self,
        g: &mut Graph,
        b: &Binding,
        history: &JointTrajectory,
        segment: &Segment,
    ) -> (Var, Var, Var, Var) {
        let n = self.n_agents;
        let hist_steps: Vec<Var> = self
            .enc
            .step_matrices(history)
            .into_iter()
            .map(|t| g.constant(t))
            .collect();
        let seg_steps: Vec<Var> = self
            .enc
            .segment_matrices(segment)
            .into_iter()
            .map(|t| g.constant(t))
            .collect();
        let h_fwd = self.fwd.run(g, b, &hist_steps, n);
        let h_bwd = self.bwd.run_reversed(g, b, &seg_steps, n);
        let joint = g.concat_rows(&[h_fwd, h_bwd]);
        let y = self.gcn.forward(g, b, joint);
        let raw_a = self.head_a.forward(g, b, y);
        let raw_r = self.head_r.forward(g, b, y);
        let d = self.d_z;
        let mu_a = g.slice_rows(raw_a, 0, d);
        let sp_a = g.slice_rows(raw_a, d, 2 * d);
        let sp_a = g.softplus(sp_a);
        let sigma_a = g.add_scalar(sp_a, SIGMA_FLOOR);
        let mu_r = g.slice_rows(raw_r, 0, d);
        let sp_r = g.slice_rows(raw_r, d, 2 * d);
        let sp_r = g.softplus(sp_r);
        let sigma_r = g.add_scalar(sp_r, SIGMA_FLOOR);
        (mu_a, sigma_a, mu_r, sigma_r)
    }

    /// Log-density of `(z_A, z~_R)` under the posterior.
    pub fn logp_graph(
        &self,
        g: &mut Graph,
        b: &Binding,
        history: &JointTrajectory,
        segment: &Segment,
        z_a: Var,
        z_r_pre: Var,
    ) -> Var {
        let (mu_a, sigma_a, mu_r, sigma_r) = self.heads_graph(g, b, history, segment);
        let lp_a = gaussian_logp(g, z_a, mu_a, sigma_a);
        let lp_r = gaussian_logp(g, z_r_pre, mu_r, sigma_r);
        g.add(lp_a, lp_r)
    }
}

/// Which posterior a tightening step updates.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TightenOwner {
    Phi,
    Xi,
}

/// One KL-tightening batch item: a replayed (history, segment) pair with
/// its recorded strategy pieces.
pub struct TightenItem<'a> {
    pub history: &'a JointTrajectory,
    pub segment: &'a Segment,
    pub next_obs: Option<&'a Vec<Vec<f64>>>,
    /// Per-agent `[z_A^i; z_R^i]` conditioning vectors.
    pub z_cond: Vec<Tensor>,
    pub z_a: &'a Tensor,
    pub z_r_pre: &'a Tensor,
}

/// Gradient step on `-E[log q_owner(.)]`, the tractable surrogate of the
/// KL-tightening gradient. Returns the surrogate value.
pub fn kl_tighten_step(
    owner: TightenOwner,
    obs_post: &ObsPosterior,
    strat_post: &StrategyPosterior,
    params: &mut ParamSet,
    opt: &mut RmsProp,
    items: &[TightenItem<'_>],
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::invalid_argument("empty tightening batch"));
    }
    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let mut terms = Vec::with_capacity(items.len());
    for item in items {
        let lp = match owner {
            TightenOwner::Phi => {
                let z: Vec<Var> = item.z_cond.iter().map(|t| g.constant(t.clone())).collect();
                let targets = obs_targets(item.segment, item.next_obs);
                obs_post.logp_segment_graph(&mut g, &b, item.history, item.segment, &targets, Some(&z))?
            }
            TightenOwner::Xi => {
                let za = g.constant(item.z_a.clone());
                let zr = g.constant(item.z_r_pre.clone());
                strat_post.logp_graph(&mut g, &b, item.history, item.segment, za, zr)
            }
        };
        terms.push(lp);
    }
    let stacked = g.concat_rows(&terms);
    let mean = g.mean_all(stacked);
    let loss = g.neg(mean);
    let grads = g.backward(loss)?;
    let value = g.value(loss).item();
    let grad_tensors = b.gradients(params, &grads);
    opt.step(params, &grad_tensors)?;
    Ok(value)
}
