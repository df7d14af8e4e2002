//! Episodic replay buffer.
//!
//! Episodes are stored whole (not as transitions) so that
//! (history-prefix, following-segment) pairs can be reconstructed for
//! training. The buffer is generic over the per-segment strategy record that
//! the trainer attaches when the episode was collected.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use rand::seq::index::sample as index_sample;
use rand::Rng;

use super::{segment_trajectory, JointTrajectory, Segment};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EpisodeRecord<S> {
    pub traj: JointTrajectory,
    /// One record per segment of the episode.
    pub strategies: Vec<S>,
    /// Global environment state at each step (used by the centralized
    /// mixer); may be empty outside RL training.
    pub global_states: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer<S> {
    capacity: usize,
    segment_len: usize,
    episodes: VecDeque<EpisodeRecord<S>>,
}

/// One training pair: the history prefix `tau_{ks}` and the segment
/// `zeta_k` that immediately follows it.
#[derive(Clone, Debug)]
pub struct SamplePair<S> {
    pub episode_index: usize,
    pub k: usize,
    pub history: JointTrajectory,
    pub segment: Segment,
    /// Shared rewards over the segment's valid steps.
    pub seg_rewards: Vec<f64>,
    /// Joint observation at the step right after the segment, if the episode
    /// continued past it.
    pub next_obs: Option<Vec<Vec<f64>>>,
    pub strategy: S,
    /// True on the final segment of an episode that terminated.
    pub terminal: bool,
}

impl<S: Clone> ReplayBuffer<S> {
    pub fn new(capacity: usize, segment_len: usize) -> Self {
        assert!(capacity >= 1 && segment_len >= 1);
        ReplayBuffer { capacity, segment_len, episodes: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRecord<S>> {
        self.episodes.iter()
    }

    pub fn episode(&self, idx: usize) -> &EpisodeRecord<S> {
        &self.episodes[idx]
    }

    /// Append a completed episode; evicts the oldest episode when full.
    pub fn push_episode(&mut self, traj: JointTrajectory, strategies: Vec<S>) -> Result<()> {
        self.push_episode_with_states(traj, strategies, Vec::new())
    }

    pub fn push_episode_with_states(
        &mut self,
        traj: JointTrajectory,
        strategies: Vec<S>,
        global_states: Vec<Vec<f64>>,
    ) -> Result<()> {
        if traj.is_empty() {
            return Err(Error::invalid_argument("cannot store an empty episode"));
        }
        if !global_states.is_empty() && global_states.len() != traj.len() {
            return Err(Error::invalid_argument("one global state per step expected"));
        }
        let n_segments = traj.len().div_ceil(self.segment_len);
        if strategies.len() != n_segments {
            return Err(Error::invalid_argument(format!(
                "expected {} strategy records, got {}",
                n_segments,
                strategies.len()
            )));
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(EpisodeRecord { traj, strategies, global_states });
        Ok(())
    }

    /// Uniformly sample episode indices, with replacement when the buffer
    /// holds fewer episodes than requested.
    pub fn sample_episode_indices(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.episodes.is_empty() {
            return Err(Error::NotReady("replay buffer holds no completed episode".into()));
        }
        if batch <= self.episodes.len() {
            Ok(index_sample(rng, self.episodes.len(), batch).into_vec())
        } else {
            Ok((0..batch).map(|_| rng.random_range(0..self.episodes.len())).collect())
        }
    }

    /// Total number of (history, segment) pairs available.
    pub fn n_pairs(&self) -> usize {
        self.episodes
            .iter()
            .map(|e| e.traj.len().div_ceil(self.segment_len))
            .sum()
    }

    /// Uniformly sample `batch` (history, segment) pairs. Sampling is
    /// without replacement when enough pairs exist; otherwise with
    /// replacement, signalled by the returned flag.
    pub fn sample(
        &self,
        batch: usize,
        rng: &mut impl Rng,
    ) -> Result<(Vec<SamplePair<S>>, bool)> {
        if self.episodes.is_empty() {
            return Err(Error::NotReady("replay buffer holds no completed episode".into()));
        }
        let mut index: Vec<(usize, usize)> = Vec::new();
        for (ei, ep) in self.episodes.iter().enumerate() {
            for k in 0..ep.traj.len().div_ceil(self.segment_len) {
                index.push((ei, k));
            }
        }
        let with_replacement = batch > index.len();
        let chosen: Vec<(usize, usize)> = if with_replacement {
            (0..batch).map(|_| index[rng.random_range(0..index.len())]).collect()
        } else {
            index_sample(rng, index.len(), batch).into_iter().map(|i| index[i]).collect()
        };
        let pairs = chosen
            .into_iter()
            .map(|(ei, k)| self.make_pair(ei, k))
            .collect::<Result<Vec<_>>>()?;
        Ok((pairs, with_replacement))
    }

    pub fn make_pair(&self, episode_index: usize, k: usize) -> Result<SamplePair<S>> {
        let ep = &self.episodes[episode_index];
        let s = self.segment_len;
        let segs = segment_trajectory(&ep.traj, s)?;
        if k >= segs.len() {
            return Err(Error::invalid_argument("segment index out of range"));
        }
        let segment = segs[k].clone();
        let history = ep.traj.prefix(k * s);
        let seg_end = ((k + 1) * s).min(ep.traj.len());
        let seg_rewards = ep.traj.rewards[k * s..seg_end].to_vec();
        let next_obs = if seg_end < ep.traj.len() {
            Some(
                ep.traj
                    .per_agent
                    .iter()
                    .map(|l| l.steps[seg_end].obs.clone())
                    .collect(),
            )
        } else {
            None
        };
        let terminal = seg_end == ep.traj.len() && ep.traj.is_done();
        Ok(SamplePair {
            episode_index,
            k,
            history,
            segment,
            seg_rewards,
            next_obs,
            strategy: ep.strategies[k].clone(),
            terminal,
        })
    }
}

/// Thread-safe wrapper: rollout workers append concurrently, a single
/// trainer samples.
#[derive(Clone)]
pub struct SharedReplay<S> {
    inner: Arc<Mutex<ReplayBuffer<S>>>,
}

impl<S: Clone> SharedReplay<S> {
    pub fn new(capacity: usize, segment_len: usize) -> Self {
        SharedReplay { inner: Arc::new(Mutex::new(ReplayBuffer::new(capacity, segment_len))) }
    }

    pub fn push_episode(&self, traj: JointTrajectory, strategies: Vec<S>) -> Result<()> {
        self.inner.lock().unwrap().push_episode(traj, strategies)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.lock().unwrap().is_empty()
    }

    pub fn with<R>(&self, f: impl FnOnce(&ReplayBuffer<S>) -> R) -> R {
        f(&self.inner.lock().unwrap())
    }
}
