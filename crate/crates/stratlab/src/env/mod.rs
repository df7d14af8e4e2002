//! Dec-POMDP contract: environment specs, trajectories, segments, and the
//! episodic replay buffer shared by all learners.

pub mod replay;
pub mod serial;

pub use replay::{ReplayBuffer, SamplePair, SharedReplay};

use crate::error::{Error, Result};

/// Discrete action index. Action 0 doubles as the designated no-op used for
/// post-termination padding.
pub type ActionId = usize;

pub const NOOP_ACTION: ActionId = 0;

/// Static description of a Dec-POMDP instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub segment_len: usize,
    pub n_segments: usize,
}

impl EnvSpec {
    pub fn new(
        n_agents: usize,
        obs_dim: usize,
        n_actions: usize,
        gamma: f64,
        segment_len: usize,
        n_segments: usize,
    ) -> Result<Self> {
        if n_agents < 1 {
            return Err(Error::invalid_argument("n_agents must be >= 1"));
        }
        if n_actions < 1 {
            return Err(Error::invalid_argument("n_actions must be >= 1"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid_argument("gamma must be in [0,1)"));
        }
        if segment_len < 1 || n_segments < 1 {
            return Err(Error::invalid_argument("segment_len and n_segments must be >= 1"));
        }
        Ok(EnvSpec {
            n_agents,
            obs_dim,
            n_actions,
            horizon: segment_len * n_segments,
            gamma,
            segment_len,
            n_segments,
        })
    }

    pub fn one_hot(&self, action: ActionId) -> Vec<f64> {
        debug_assert!(action < self.n_actions);
        let mut v = vec![0.0; self.n_actions];
        v[action] = 1.0;
        v
    }
}

/// Discount weight of segment `k`: `gamma^(k*s)`.
pub fn discounted_segment_weight(k: usize, s: usize, gamma: f64) -> f64 {
    assert!((0.0..1.0).contains(&gamma), "gamma must be in [0,1)");
    gamma.powi((k * s) as i32)
}

/// One observation/action step of a single agent.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajStep {
    pub obs: Vec<f64>,
    pub action: ActionId,
}

/// One agent's observation/action history.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTrajectory {
    pub agent_id: usize,
    pub steps: Vec<TrajStep>,
}

impl LocalTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Joint history of all agents plus the shared reward stream.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTrajectory {
    pub per_agent: Vec<LocalTrajectory>,
    pub rewards: Vec<f64>,
    pub done_mask: Vec<bool>,
}

impl JointTrajectory {
    pub fn new(n_agents: usize) -> Self {
        JointTrajectory {
            per_agent: (0..n_agents)
                .map(|agent_id| LocalTrajectory { agent_id, steps: Vec::new() })
                .collect(),
            rewards: Vec::new(),
            done_mask: Vec::new(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_done(&self) -> bool {
        self.done_mask.last().copied().unwrap_or(false)
    }

    pub fn push_step(
        &mut self,
        observations: &[Vec<f64>],
        actions: &[ActionId],
        reward: f64,
        done: bool,
    ) {
        assert_eq!(observations.len(), self.per_agent.len());
        assert_eq!(actions.len(), self.per_agent.len());
        for (i, local) in self.per_agent.iter_mut().enumerate() {
            local.steps.push(TrajStep { obs: observations[i].clone(), action: actions[i] });
        }
        self.rewards.push(reward);
        self.done_mask.push(done);
    }

    /// The first `len` steps as an owned trajectory.
    pub fn prefix(&self, len: usize) -> JointTrajectory {
        assert!(len <= self.len(), "prefix longer than trajectory");
        JointTrajectory {
            per_agent: self
                .per_agent
                .iter()
                .map(|l| LocalTrajectory {
                    agent_id: l.agent_id,
                    steps: l.steps[..len].to_vec(),
                })
                .collect(),
            rewards: self.rewards[..len].to_vec(),
            done_mask: self.done_mask[..len].to_vec(),
        }
    }

    fn check_consistent(&self) {
        let len = self.rewards.len();
        assert_eq!(self.done_mask.len(), len, "done mask length mismatch");
        for l in &self.per_agent {
            assert_eq!(l.steps.len(), len, "per-agent length mismatch");
        }
    }
}

/// An `s`-step window of the joint trajectory. Steps past early termination
/// hold the absorbing observation (all zeros) and the no-op action, with the
/// validity mask cleared.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub index: usize,
    /// `per_agent[i]` has exactly `s` steps.
    pub per_agent: Vec<Vec<TrajStep>>,
    pub valid_mask: Vec<bool>,
}

impl Segment {
    pub fn seg_len(&self) -> usize {
        self.valid_mask.len()
    }

    pub fn n_valid(&self) -> usize {
        self.valid_mask.iter().filter(|v| **v).count()
    }
}

/// Split a trajectory into `ceil(len/s)` segments in order; the final
/// segment is padded and masked when the episode ended early.
pub fn segment_trajectory(traj: &JointTrajectory, s: usize) -> Result<Vec<Segment>> {
    if s == 0 {
        return Err(Error::invalid_argument("segment length must be >= 1"));
    }
    traj.check_consistent();
    let len = traj.len();
    let n_agents = traj.n_agents();
    let obs_dim = traj
        .per_agent
        .first()
        .and_then(|l| l.steps.first())
        .map(|st| st.obs.len())
        .unwrap_or(0);
    let n_segments = len.div_ceil(s);
    let mut out = Vec::with_capacity(n_segments);
    for k in 0..n_segments {
        let start = k * s;
        let mut per_agent = vec![Vec::with_capacity(s); n_agents];
        let mut valid_mask = Vec::with_capacity(s);
        for offset in 0..s {
            let t = start + offset;
            if t < len {
                for (i, rows) in per_agent.iter_mut().enumerate() {
                    rows.push(traj.per_agent[i].steps[t].clone());
                }
                valid_mask.push(true);
            } else {
                for rows in per_agent.iter_mut() {
                    rows.push(TrajStep { obs: vec![0.0; obs_dim], action: NOOP_ACTION });
                }
                valid_mask.push(false);
            }
        }
        out.push(Segment { index: k, per_agent, valid_mask });
    }
    Ok(out)
}
