//! Trajectory-to-model-input encoding shared by every network.
//!
//! A step feeds the networks as `[observation; action channels]`. Action
//! channels are the one-hot action in RL mode; forecasting uses a no-op-only
//! action space whose channels are identically zero, so the same machinery
//! serves both.

use crate::env::{JointTrajectory, Segment, TrajStep};
use crate::nn::Tensor;

#[derive(Clone, Debug)]
pub struct EncodeSpec {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub zero_action_channels: bool,
}

impl EncodeSpec {
    pub fn rl(obs_dim: usize, n_actions: usize) -> Self {
        EncodeSpec { obs_dim, n_actions, zero_action_channels: false }
    }

    pub fn forecast(obs_dim: usize) -> Self {
        EncodeSpec { obs_dim, n_actions: 1, zero_action_channels: true }
    }

    /// Width of one encoded step.
    pub fn in_dim(&self) -> usize {
        self.obs_dim + self.n_actions
    }

    pub fn action_channels(&self, action: usize) -> Vec<f64> {
        if self.zero_action_channels {
            return vec![0.0; self.n_actions];
        }
        let mut v = vec![0.0; self.n_actions];
        v[action] = 1.0;
        v
    }

    pub fn step_vec(&self, step: &TrajStep) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.in_dim());
        v.extend_from_slice(&step.obs);
        v.extend(self.action_channels(step.action));
        v
    }

    /// `(in_dim x n_agents)` matrix for step `t` of a joint trajectory.
    pub fn step_matrix(&self, traj: &JointTrajectory, t: usize) -> Tensor {
        let n = traj.n_agents();
        let cols: Vec<Tensor> = (0..n)
            .map(|i| Tensor::col(&self.step_vec(&traj.per_agent[i].steps[t])))
            .collect();
        Tensor::from_columns(&cols)
    }

    /// All steps of a trajectory as `(in_dim x n_agents)` matrices.
    pub fn step_matrices(&self, traj: &JointTrajectory) -> Vec<Tensor> {
        (0..traj.len()).map(|t| self.step_matrix(traj, t)).collect()
    }

    /// All steps of a segment (including padded ones) as matrices.
    pub fn segment_matrices(&self, seg: &Segment) -> Vec<Tensor> {
        let n = seg.per_agent.len();
        (0..seg.seg_len())
            .map(|p| {
                let cols: Vec<Tensor> = (0..n)
                    .map(|i| Tensor::col(&self.step_vec(&seg.per_agent[i][p])))
                    .collect();
                Tensor::from_columns(&cols)
            })
            .collect()
    }

    /// `(obs_dim x n_agents)` observation matrix of segment step `p`.
    pub fn segment_obs_matrix(&self, seg: &Segment, p: usize) -> Tensor {
        let cols: Vec<Tensor> = seg
            .per_agent
            .iter()
            .map(|rows| Tensor::col(&rows[p].obs))
            .collect();
        Tensor::from_columns(&cols)
    }

    /// One-hot action matrix `(n_actions x n_agents)` of segment step `p`.
    pub fn segment_action_onehot(&self, seg: &Segment, p: usize) -> Tensor {
        let cols: Vec<Tensor> = seg
            .per_agent
            .iter()
            .map(|rows| {
                let mut v = vec![0.0; self.n_actions];
                v[rows[p].action] = 1.0;
                Tensor::col(&v)
            })
            .collect();
        Tensor::from_columns(&cols)
    }

    /// Utility-network step input: `[o_t; onehot(a_{t-1})]` per agent
    /// (zero action channels at t = 0). `obs[t]` is agent-major.
    pub fn q_input(&self, obs_t: &[Vec<f64>], prev_actions: Option<&[usize]>) -> Tensor {
        let n = obs_t.len();
        let cols: Vec<Tensor> = (0..n)
            .map(|i| {
                let mut v = Vec::with_capacity(self.in_dim());
                v.extend_from_slice(&obs_t[i]);
                match prev_actions {
                    Some(acts) if !self.zero_action_channels => {
                        let mut oh = vec![0.0; self.n_actions];
                        oh[acts[i]] = 1.0;
                        v.extend(oh);
                    }
                    _ => v.extend(vec![0.0; self.n_actions]),
                }
                Tensor::col(&v)
            })
            .collect();
        Tensor::from_columns(&cols)
    }

    /// Per-step utility-network inputs over a whole trajectory.
    pub fn q_inputs(&self, traj: &JointTrajectory) -> Vec<Tensor> {
        (0..traj.len())
            .map(|t| {
                let obs: Vec<Vec<f64>> =
                    traj.per_agent.iter().map(|l| l.steps[t].obs.clone()).collect();
                let prev: Option<Vec<usize>> = if t == 0 {
                    None
                } else {
                    Some(traj.per_agent.iter().map(|l| l.steps[t - 1].action).collect())
                };
                self.q_input(&obs, prev.as_deref())
            })
            .collect()
    }
}
