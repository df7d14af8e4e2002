//! Grid-world spread: agents cover landmarks under partial observability.
//!
//! Shared reward per step is `-(sum over landmarks of Manhattan distance to
//! the nearest agent) / grid_size`; the maximum (0) is reached when every
//! landmark has an agent on it.

use rand::rngs::StdRng;

use super::{Env, StepOutcome};
use crate::env::{ActionId, EnvSpec};
use crate::error::{Error, Result};

/// Actions: 0 stay (no-op), 1 up, 2 down, 3 left, 4 right.
const MOVES: [(i64, i64); 5] = [(0, 0), (0, 1), (0, -1), (-1, 0), (1, 0)];

#[derive(Clone, Debug)]
pub struct SpreadConfig {
    pub grid_size: usize,
    pub agent_starts: Vec<(i64, i64)>,
    pub landmarks: Vec<(i64, i64)>,
    /// Chebyshev visibility radius for landmarks and other agents.
    pub obs_radius: i64,
    pub horizon: usize,
    pub segment_len: usize,
    pub gamma: f64,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        SpreadConfig {
            grid_size: 3,
            agent_starts: vec![(0, 0), (2, 2)],
            landmarks: vec![(0, 2), (2, 0)],
            obs_radius: 2,
            horizon: 8,
            segment_len: 4,
            gamma: 0.95,
        }
    }
}

pub struct SpreadGrid {
    cfg: SpreadConfig,
    spec: EnvSpec,
    positions: Vec<(i64, i64)>,
    t: usize,
}

impl SpreadGrid {
    pub fn new(cfg: SpreadConfig) -> Result<Self> {
        let g = cfg.grid_size as i64;
        if cfg.agent_starts.is_empty() || cfg.landmarks.is_empty() {
            return Err(Error::invalid_argument("need at least one agent and landmark"));
        }
        let inside = |p: &(i64, i64)| p.0 >= 0 && p.0 < g && p.1 >= 0 && p.1 < g;
        if !cfg.agent_starts.iter().all(inside) || !cfg.landmarks.iter().all(inside) {
            return Err(Error::invalid_argument("positions must lie within the grid"));
        }
        if cfg.horizon % cfg.segment_len != 0 {
            return Err(Error::invalid_argument("segment_len must divide horizon"));
        }
        let n_agents = cfg.agent_starts.len();
        let obs_dim = 2 + 3 * cfg.landmarks.len() + 3 * (n_agents - 1);
        let spec = EnvSpec::new(
            n_agents,
            obs_dim,
            5,
            cfg.gamma,
            cfg.segment_len,
            cfg.horizon / cfg.segment_len,
        )?;
        let positions = cfg.agent_starts.clone();
        Ok(SpreadGrid { cfg, spec, positions, t: 0 })
    }

    fn reward(&self) -> f64 {
        let mut total = 0.0;
        for lm in &self.cfg.landmarks {
            let nearest = self
                .positions
                .iter()
                .map(|p| (p.0 - lm.0).abs() + (p.1 - lm.1).abs())
                .min()
                .unwrap();
            total += nearest as f64;
        }
        -total / self.cfg.grid_size as f64
    }

    fn observe(&self, i: usize) -> Vec<f64> {
        let g = self.cfg.grid_size as f64;
        let me = self.positions[i];
        let mut obs = vec![me.0 as f64 / g, me.1 as f64 / g];
        let visible = |a: (i64, i64), b: (i64, i64)| {
            (a.0 - b.0).abs().max((a.1 - b.1).abs()) <= self.cfg.obs_radius
        };
        for lm in &self.cfg.landmarks {
            if visible(me, *lm) {
                obs.extend([1.0, (lm.0 - me.0) as f64 / g, (lm.1 - me.1) as f64 / g]);
            } else {
                obs.extend([0.0, 0.0, 0.0]);
            }
        }
        for (j, p) in self.positions.iter().enumerate() {
            if j == i {
                continue;
            }
            if visible(me, *p) {
                obs.extend([1.0, (p.0 - me.0) as f64 / g, (p.1 - me.1) as f64 / g]);
            } else {
                obs.extend([0.0, 0.0, 0.0]);
            }
        }
        obs
    }

    fn joint_obs(&self) -> Vec<Vec<f64>> {
        (0..self.positions.len()).map(|i| self.observe(i)).collect()
    }

    pub fn positions(&self) -> &[(i64, i64)] {
        &self.positions
    }
}

impl Env for SpreadGrid {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut StdRng) -> Vec<Vec<f64>> {
        self.positions = self.cfg.agent_starts.clone();
        self.t = 0;
        self.joint_obs()
    }

    fn step(&mut self, actions: &[ActionId]) -> Result<StepOutcome> {
        if self.t >= self.cfg.horizon {
            return Err(Error::InvalidState("episode already terminated".into()));
        }
        if actions.len() != self.positions.len() || actions.iter().any(|a| *a >= 5) {
            return Err(Error::invalid_argument("one action in 0..5 per agent expected"));
        }
        let g = self.cfg.grid_size as i64;
        for (pos, act) in self.positions.iter_mut().zip(actions.iter()) {
            let (dx, dy) = MOVES[*act];
            pos.0 = (pos.0 + dx).clamp(0, g - 1);
            pos.1 = (pos.1 + dy).clamp(0, g - 1);
        }
        self.t += 1;
        Ok(StepOutcome {
            obs: self.joint_obs(),
            reward: self.reward(),
            done: self.t >= self.cfg.horizon,
        })
    }

    fn global_state(&self) -> Vec<f64> {
        let g = self.cfg.grid_size as f64;
        let mut state = Vec::with_capacity(2 * self.positions.len() + 1);
        for p in &self.positions {
            state.push(p.0 as f64 / g);
            state.push(p.1 as f64 / g);
        }
        state.push(self.t as f64 / self.cfg.horizon as f64);
        state
    }
}

/// Exact optimal return by dynamic programming over the joint position
/// space (deterministic transitions, shared reward). Breadth-first layer by
/// layer over time.
pub fn spread_optimal_return(cfg: &SpreadConfig) -> f64 {
    use std::collections::HashMap;
    let n = cfg.agent_starts.len();
    let g = cfg.grid_size as i64;
    let reward_of = |positions: &Vec<(i64, i64)>| -> f64 {
        let mut total = 0.0;
        for lm in &cfg.landmarks {
            let nearest = positions
                .iter()
                .map(|p| (p.0 - lm.0).abs() + (p.1 - lm.1).abs())
                .min()
                .unwrap();
            total += nearest as f64;
        }
        -total / cfg.grid_size as f64
    };

    // V_{horizon}(pos) = 0; sweep backwards.
    let mut all_positions: Vec<Vec<(i64, i64)>> = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for partial in &all_positions {
            for x in 0..g {
                for y in 0..g {
                    let mut p = partial.clone();
                    p.push((x, y));
                    next.push(p);
                }
            }
        }
        all_positions = next;
    }
    let joint_actions: Vec<Vec<usize>> = {
        let mut acc: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::new();
            for partial in &acc {
                for a in 0..5usize {
                    let mut p = partial.clone();
                    p.push(a);
                    next.push(p);
                }
            }
            acc = next;
        }
        acc
    };

    let mut value: HashMap<Vec<(i64, i64)>, f64> =
        all_positions.iter().map(|p| (p.clone(), 0.0)).collect();
    for _t in (0..cfg.horizon).rev() {
        let mut next_value = HashMap::with_capacity(value.len());
        for pos in &all_positions {
            let mut best = f64::NEG_INFINITY;
            for acts in &joint_actions {
                let moved: Vec<(i64, i64)> = pos
                    .iter()
                    .zip(acts.iter())
                    .map(|(p, a)| {
                        let (dx, dy) = MOVES[*a];
                        ((p.0 + dx).clamp(0, g - 1), (p.1 + dy).clamp(0, g - 1))
                    })
                    .collect();
                let v = reward_of(&moved) + value[&moved];
                best = best.max(v);
            }
            next_value.insert(pos.clone(), best);
        }
        value = next_value;
    }
    value[&cfg.agent_starts]
}
