//! Segment prediction: the autoregressive gated dilated-convolution model
//! that decodes an s-step future segment from a joint history and a
//! strategy, plus the reconstruction objective.

pub mod posterior;

pub use posterior::{kl_tighten_step, ObsPosterior, StrategyPosterior};

use rand::Rng;

use crate::encode::EncodeSpec;
use crate::env::{JointTrajectory, Segment, TrajStep, NOOP_ACTION};
use crate::error::Result;
use crate::nn::{
    Act, Binding, GatedConvLayer, Gcn, Graph, Gru, Mlp, ParamId, ParamSet, Tensor, Var,
};

/// How observation means are produced from the decoder features.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum DecodeStyle {
    /// Heads emit the observation mean directly.
    Direct,
    /// Observations are `[pos(2); vel(2)]`: heads emit a velocity delta and
    /// positions integrate predicted velocities. An untrained model then
    /// reduces to constant-velocity extrapolation.
    Kinematic { dt: f64 },
}

/// Shared trunk: history-context GRU, input embedding, and a causal gated
/// dilated-convolution stack with per-agent conditioning.
pub struct ConvSeqCore {
    ctx_gru: Gru,
    ctx_gcn: Option<Gcn>,
    w_in: ParamId,
    b_in: ParamId,
    w_ctx: ParamId,
    layers: Vec<GatedConvLayer>,
    pub channels: usize,
    pub cond_dim: usize,
}

impl ConvSeqCore {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        prefix: &str,
        in_dim: usize,
        channels: usize,
        ctx_dim: usize,
        dilations: &[usize],
        cond_dim: usize,
    ) -> Self {
        Self::with_joint_ctx(ps, rng, prefix, in_dim, channels, ctx_dim, dilations, cond_dim, true)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_joint_ctx(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        prefix: &str,
        in_dim: usize,
        channels: usize,
        ctx_dim: usize,
        dilations: &[usize],
        cond_dim: usize,
        joint_ctx: bool,
    ) -> Self {
        let ctx_gru = Gru::new(ps, rng, &format!("{prefix}.ctx_gru"), in_dim, ctx_dim);
        let ctx_gcn = joint_ctx
            .then(|| Gcn::new(ps, rng, &format!("{prefix}.ctx_gcn"), ctx_dim, ctx_dim));
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let w_in = ps.add(format!("{prefix}.w_in"), Tensor::rand_uniform(channels, in_dim, bound, rng));
        let b_in = ps.add(format!("{prefix}.b_in"), Tensor::rand_uniform(channels, 1, bound, rng));
        let cbound = 1.0 / (ctx_dim.max(1) as f64).sqrt();
        let w_ctx =
            ps.add(format!("{prefix}.w_ctx"), Tensor::rand_uniform(channels, ctx_dim, cbound, rng));
        let layers = dilations
            .iter()
            .enumerate()
            .map(|(i, d)| {
                GatedConvLayer::new(ps, rng, &format!("{prefix}.conv{i}"), channels, channels, *d, cond_dim)
            })
            .collect();
        ConvSeqCore { ctx_gru, ctx_gcn, w_in, b_in, w_ctx, layers, channels, cond_dim }
    }

    /// Per-agent history context `(ctx_dim x n)`: the shared GRU state,
    /// mixed over the complete agent graph when joint context is enabled.
    /// An empty history encodes the zero state.
    pub fn context(&self, g: &mut Graph, b: &Binding, history_steps: &[Var], n: usize) -> Var {
        let h = self.ctx_gru.run(g, b, history_steps, n);
        match &self.ctx_gcn {
            Some(gcn) => gcn.forward(g, b, h),
            None => h,
        }
    }

    /// One agent's feature sequence `(channels x s)` from its decoder input
    /// `(in_dim x s)`, history context column and optional conditioning.
    pub fn features(
        &self,
        g: &mut Graph,
        b: &Binding,
        x: Var,
        ctx_col: Var,
        cond: Option<Var>,
    ) -> Var {
        let emb = g.matmul(b.var(self.w_in), x);
        let emb = g.add_col_broadcast(emb, b.var(self.b_in));
        let ctx_proj = g.matmul(b.var(self.w_ctx), ctx_col);
        let mut h = g.add_col_broadcast(emb, ctx_proj);
        for layer in &self.layers {
            h = layer.forward(g, b, h, cond);
        }
        h
    }
}

#[derive(Clone, Debug)]
pub struct PredictorConfig {
    pub n_agents: usize,
    pub enc: EncodeSpec,
    pub d_z: usize,
    pub channels: usize,
    pub ctx_dim: usize,
    pub dilations: Vec<usize>,
    pub decode: DecodeStyle,
}

impl PredictorConfig {
    pub fn new(n_agents: usize, enc: EncodeSpec, d_z: usize) -> Self {
        PredictorConfig {
            n_agents,
            enc,
            d_z,
            channels: 32,
            ctx_dim: 32,
            dilations: vec![1, 2, 4],
            decode: DecodeStyle::Direct,
        }
    }

    pub fn cond_dim(&self) -> usize {
        2 * self.d_z
    }
}

/// Graph-side prediction of one segment: per-agent observation means and
/// (in RL mode) per-step action probabilities.
pub struct PredictedSegmentVars {
    pub obs_mean: Vec<Var>,
    pub act_prob: Option<Vec<Var>>,
}

/// Plain-tensor form of a decoded segment.
#[derive(Clone, Debug)]
pub struct PredictedSegment {
    /// `obs_mean[i]` is `(obs_dim x s)`.
    pub obs_mean: Vec<Tensor>,
    pub act_prob: Option<Vec<Tensor>>,
}

/// The segment predictive model F_eta.
pub struct SegmentPredictor {
    pub cfg: PredictorConfig,
    core: ConvSeqCore,
    out_obs: Mlp,
    out_act: Option<Mlp>,
}

impl SegmentPredictor {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, cfg: PredictorConfig) -> Self {
        let core = ConvSeqCore::new(
            ps,
            rng,
            "f_eta",
            cfg.enc.in_dim(),
            cfg.channels,
            cfg.ctx_dim,
            &cfg.dilations,
            cfg.cond_dim(),
        );
        let obs_out_dim = match cfg.decode {
            DecodeStyle::Direct => cfg.enc.obs_dim,
            DecodeStyle::Kinematic { .. } => {
                assert_eq!(cfg.enc.obs_dim, 4, "kinematic decode expects [pos(2); vel(2)]");
                2
            }
        };
        let out_obs = Mlp::new(
            ps,
            rng,
            "f_eta.out_obs",
            &[cfg.channels, obs_out_dim],
            Act::Tanh,
            Act::Identity,
        );
        let out_act = if cfg.enc.zero_action_channels {
            None
        } else {
            Some(Mlp::new(
                ps,
                rng,
                "f_eta.out_act",
                &[cfg.channels, cfg.enc.n_actions],
                Act::Tanh,
                Act::Identity,
            ))
        };
        SegmentPredictor { cfg, core, out_obs, out_act }
    }

    /// Decoder input sequence for one agent: at position p the previous
    /// step, i.e. the last history step for p = 0 (zeros when the history
    /// is empty) and the segment's step p-1 afterwards.
    fn teacher_inputs(&self, history: &JointTrajectory, segment: &Segment, agent: usize) -> Tensor {
        let enc = &self.cfg.enc;
        let s = segment.seg_len();
        let mut cols = Vec::with_capacity(s);
        for p in 0..s {
            let v = if p == 0 {
                match history.len() {
                    0 => vec![0.0; enc.in_dim()],
                    len => enc.step_vec(&history.per_agent[agent].steps[len - 1]),
                }
            } else {
                enc.step_vec(&segment.per_agent[agent][p - 1])
            };
            cols.push(Tensor::col(&v));
        }
        Tensor::from_columns(&cols)
    }

    fn obs_from_features(&self, g: &mut Graph, b: &Binding, feats: Var, inputs: Var) -> Var {
        match self.cfg.decode {
            DecodeStyle::Direct => self.out_obs.forward(g, b, feats),
            DecodeStyle::Kinematic { dt } => {
                let delta_v = self.out_obs.forward(g, b, feats); // (2 x s)
                let prev_pos = g.slice_rows(inputs, 0, 2);
                let prev_vel = g.slice_rows(inputs, 2, 4);
                let vel = g.add(prev_vel, delta_v);
                let step = g.scale(vel, dt);
                let pos = g.add(prev_pos, step);
                g.concat_rows(&[pos, vel])
            }
        }
    }

    /// Teacher-forced decode of a whole segment in one causal pass; `z[i]`
    /// is agent i's conditioning vector `[z_A^i; z_R^i]` as a graph var.
    pub fn predict_segment_graph(
        &self,
        g: &mut Graph,
        b: &Binding,
        history: &JointTrajectory,
        segment: &Segment,
        z: &[Var],
    ) -> PredictedSegmentVars {
        let n = self.cfg.n_agents;
        assert_eq!(z.len(), n);
        let hist_steps: Vec<Var> = self
            .cfg
            .enc
            .step_matrices(history)
            .into_iter()
            .map(|t| g.constant(t))
            .collect();
        let ctx = self.core.context(g, b, &hist_steps, n);
        let mut obs_mean = Vec::with_capacity(n);
        let mut act_prob = self.out_act.as_ref().map(|_| Vec::with_capacity(n));
        for i in 0..n {
            let x = g.constant(self.teacher_inputs(history, segment, i));
            let ctx_i = g.slice_cols(ctx, i, i + 1);
            let feats = self.core.features(g, b, x, ctx_i, Some(z[i]));
            obs_mean.push(self.obs_from_features(g, b, feats, x));
            if let (Some(head), Some(probs)) = (self.out_act.as_ref(), act_prob.as_mut()) {
                let logits = head.forward(g, b, feats);
                probs.push(g.softmax_cols(logits));
            }
        }
        PredictedSegmentVars { obs_mean, act_prob }
    }

    /// Plain-tensor teacher-forced prediction with a fixed strategy.
    pub fn predict_segment(
        &self,
        eta: &ParamSet,
        history: &JointTrajectory,
        segment: &Segment,
        z: &[Tensor],
    ) -> PredictedSegment {
        let mut g = Graph::new();
        let b = eta.bind(&mut g);
        let z_vars: Vec<Var> = z.iter().map(|t| g.constant(t.clone())).collect();
        let out = self.predict_segment_graph(&mut g, &b, history, segment, &z_vars);
        PredictedSegment {
            obs_mean: out.obs_mean.iter().map(|v| g.value(*v).clone()).collect(),
            act_prob: out
                .act_prob
                .as_ref()
                .map(|ps_| ps_.iter().map(|v| g.value(*v).clone()).collect()),
        }
    }

    /// Self-fed decode: each predicted step becomes the next input. Actions
    /// are chosen greedily from the action head (no-op when absent). Returns
    /// the imagined segment as per-agent steps.
    pub fn imagine_segment(
        &self,
        eta: &ParamSet,
        history: &JointTrajectory,
        z: &[Tensor],
        s: usize,
    ) -> Vec<Vec<TrajStep>> {
        let n = self.cfg.n_agents;
        let enc = &self.cfg.enc;
        let mut decoded: Vec<Vec<TrajStep>> = vec![Vec::with_capacity(s); n];
        for p in 0..s {
            let mut g = Graph::new();
            let b = eta.bind(&mut g);
            let hist_steps: Vec<Var> = enc
                .step_matrices(history)
                .into_iter()
                .map(|t| g.constant(t))
                .collect();
            let ctx = self.core.context(&mut g, &b, &hist_steps, n);
            for i in 0..n {
                // inputs: previous real step then the already-imagined steps
                let mut cols = Vec::with_capacity(p + 1);
                let first = match history.len() {
                    0 => vec![0.0; enc.in_dim()],
                    len => enc.step_vec(&history.per_agent[i].steps[len - 1]),
                };
                cols.push(Tensor::col(&first));
                for q in 0..p {
                    cols.push(Tensor::col(&enc.step_vec(&decoded[i][q])));
                }
                let x = g.constant(Tensor::from_columns(&cols));
                let ctx_i = g.slice_cols(ctx, i, i + 1);
                let zi = g.constant(z[i].clone());
                let feats = self.core.features(&mut g, &b, x, ctx_i, Some(zi));
                let obs_mean = self.obs_from_features(&mut g, &b, feats, x);
                let last = g.value(obs_mean).column(p);
                let action = match &self.out_act {
                    None => NOOP_ACTION,
                    Some(head) => {
                        let logits = head.forward(&mut g, &b, feats);
                        let lv = g.value(logits);
                        let mut best = 0;
                        for a in 1..lv.rows() {
                            if lv.get(a, p) > lv.get(best, p) {
                                best = a;
                            }
                        }
                        best
                    }
                };
                decoded[i].push(TrajStep { obs: last.data().to_vec(), action });
            }
        }
        decoded
    }
}

/// One (history, segment, conditioning) item of a reconstruction batch.
pub struct ReconItem<'a> {
    pub history: &'a JointTrajectory,
    pub segment: &'a Segment,
    /// Per-agent `[z_A^i; z_R^i]` vars (graph-connected for omega gradients,
    /// constants otherwise).
    pub z: Vec<Var>,
}

/// Frobenius-norm reconstruction error over a batch: predictions and truth
/// are stacked and the norm taken once, masked for post-termination padding.
pub fn reconstruction_loss(
    g: &mut Graph,
    b: &Binding,
    predictor: &SegmentPredictor,
    items: &[ReconItem<'_>],
) -> Result<Var> {
    let enc = predictor.cfg.enc.clone();
    let mut sq_terms: Vec<Var> = Vec::new();
    for item in items {
        let pred = predictor.predict_segment_graph(g, b, item.history, item.segment, &item.z);
        let s = item.segment.seg_len();
        let mask_row: Vec<f64> =
            item.segment.valid_mask.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
        for (i, mean) in pred.obs_mean.iter().enumerate() {
            let true_obs = {
                let cols: Vec<Tensor> = (0..s)
                    .map(|p| Tensor::col(&item.segment.per_agent[i][p].obs))
                    .collect();
                g.constant(Tensor::from_columns(&cols))
            };
            let diff = g.sub(true_obs, *mean);
            let mask = g.constant(Tensor::from_fn(enc.obs_dim, s, |_, c| mask_row[c]));
            let masked = g.mul(diff, mask);
            sq_terms.push(g.sum_sq(masked));
        }
        if let Some(act_prob) = &pred.act_prob {
            for (i, prob) in act_prob.iter().enumerate() {
                let mut onehot = Tensor::zeros(enc.n_actions, s);
                for p in 0..s {
                    onehot.set(item.segment.per_agent[i][p].action, p, 1.0);
                }
                let target = g.constant(onehot);
                let diff = g.sub(target, *prob);
                let mask = g.constant(Tensor::from_fn(enc.n_actions, s, |_, c| mask_row[c]));
                let masked = g.mul(diff, mask);
                sq_terms.push(g.sum_sq(masked));
            }
        }
    }
    let stacked = g.concat_rows(&sq_terms);
    let total = g.sum_all(stacked);
    Ok(g.sqrt(total))
}
