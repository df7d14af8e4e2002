//! Two-phase coordination game for two agents.
//!
//! Phase 1: agent 1's action selects branch A or B. Phase 2: branch A pays 7
//! for any joint action; branch B pays `[[0, 1], [1, 8]]`. The optimum (8)
//! requires joint agreement, which is what makes the game a probe for value
//! decomposition quality.

use rand::rngs::StdRng;

use super::{Env, StepOutcome};
use crate::env::{ActionId, EnvSpec};
use crate::error::{Error, Result};

const BRANCH_B_PAYOFF: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 8.0]];

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Phase {
    First,
    BranchA,
    BranchB,
    Terminal,
}

pub struct TwoStepGame {
    spec: EnvSpec,
    phase: Phase,
}

impl TwoStepGame {
    /// `segment_len` must divide the horizon of 2.
    pub fn new(segment_len: usize) -> Result<Self> {
        if segment_len == 0 || 2 % segment_len != 0 {
            return Err(Error::invalid_argument("segment_len must be 1 or 2"));
        }
        let spec = EnvSpec::new(2, 3, 2, 0.99, segment_len, 2 / segment_len)?;
        Ok(TwoStepGame { spec, phase: Phase::Terminal })
    }

    fn phase_obs(&self) -> Vec<f64> {
        match self.phase {
            Phase::First => vec![1.0, 0.0, 0.0],
            Phase::BranchA => vec![0.0, 1.0, 0.0],
            Phase::BranchB | Phase::Terminal => vec![0.0, 0.0, 1.0],
        }
    }

    fn joint_obs(&self) -> Vec<Vec<f64>> {
        vec![self.phase_obs(), self.phase_obs()]
    }
}

impl Env for TwoStepGame {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut StdRng) -> Vec<Vec<f64>> {
        self.phase = Phase::First;
        self.joint_obs()
    }

    fn step(&mut self, actions: &[ActionId]) -> Result<StepOutcome> {
        if actions.len() != 2 || actions.iter().any(|a| *a >= 2) {
            return Err(Error::invalid_argument("two agents with binary actions expected"));
        }
        match self.phase {
            Phase::Terminal => Err(Error::InvalidState("episode already terminated".into())),
            Phase::First => {
                self.phase = if actions[0] == 0 { Phase::BranchA } else { Phase::BranchB };
                Ok(StepOutcome { obs: self.joint_obs(), reward: 0.0, done: false })
            }
            Phase::BranchA => {
                self.phase = Phase::Terminal;
                Ok(StepOutcome { obs: self.joint_obs(), reward: 7.0, done: true })
            }
            Phase::BranchB => {
                let reward = BRANCH_B_PAYOFF[actions[0]][actions[1]];
                self.phase = Phase::Terminal;
                Ok(StepOutcome { obs: self.joint_obs(), reward, done: true })
            }
        }
    }

    fn global_state(&self) -> Vec<f64> {
        self.phase_obs()
    }

    fn obs_vocab(&self) -> Option<Vec<Vec<f64>>> {
        Some(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]])
    }
}

/// Exhaustive search over all deterministic joint policies: agent 1's first
/// action, and each agent's phase-2 action per branch. Returns the optimal
/// undiscounted episode return.
pub fn two_step_optimal_return() -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut rng = <StdRng as rand::SeedableRng>::seed_from_u64(0);
    for first in 0..2usize {
        for a0_by_branch in 0..4usize {
            for a1_by_branch in 0..4usize {
                let mut env = TwoStepGame::new(1).unwrap();
                env.reset(&mut rng);
                let o1 = env.step(&[first, 0]).unwrap();
                assert!(!o1.done);
                let branch = if first == 0 { 0 } else { 1 };
                let a0 = (a0_by_branch >> branch) & 1;
                let a1 = (a1_by_branch >> branch) & 1;
                let o2 = env.step(&[a0, a1]).unwrap();
                assert!(o2.done);
                best = best.max(o1.reward + o2.reward);
            }
        }
    }
    best
}
