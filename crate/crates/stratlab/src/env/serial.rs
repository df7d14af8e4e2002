//! Episode serialization: JSON-lines, one episode per line.
//!
//! `{"obs": [[[...]]], "acts": [[...]], "rews": [...], "done": [...]}`
//! where `obs[t][i]` is agent `i`'s observation vector at step `t` and
//! `acts[t][i]` its action index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::JointTrajectory;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct EpisodeLine {
    obs: Vec<Vec<Vec<f64>>>,
    acts: Vec<Vec<usize>>,
    rews: Vec<f64>,
    done: Vec<bool>,
}

impl From<&JointTrajectory> for EpisodeLine {
    fn from(traj: &JointTrajectory) -> Self {
        let len = traj.len();
        let obs = (0..len)
            .map(|t| traj.per_agent.iter().map(|l| l.steps[t].obs.clone()).collect())
            .collect();
        let acts = (0..len)
            .map(|t| traj.per_agent.iter().map(|l| l.steps[t].action).collect())
            .collect();
        EpisodeLine { obs, acts, rews: traj.rewards.clone(), done: traj.done_mask.clone() }
    }
}

impl EpisodeLine {
    fn into_trajectory(self) -> Result<JointTrajectory> {
        let len = self.rews.len();
        if self.obs.len() != len || self.acts.len() != len || self.done.len() != len {
            return Err(Error::invalid_argument("episode field lengths disagree"));
        }
        let n_agents = self.obs.first().map(|o| o.len()).unwrap_or(0);
        let mut traj = JointTrajectory::new(n_agents);
        for t in 0..len {
            if self.obs[t].len() != n_agents || self.acts[t].len() != n_agents {
                return Err(Error::invalid_argument("agent count varies within episode"));
            }
            traj.push_step(&self.obs[t], &self.acts[t], self.rews[t], self.done[t]);
        }
        Ok(traj)
    }
}

pub fn write_episodes(path: impl AsRef<Path>, episodes: &[JointTrajectory]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ep in episodes {
        serde_json::to_writer(&mut w, &EpisodeLine::from(ep))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episodes(path: impl AsRef<Path>) -> Result<Vec<JointTrajectory>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: EpisodeLine = serde_json::from_str(&line)?;
        out.push(ep.into_trajectory()?);
    }
    Ok(out)
}
