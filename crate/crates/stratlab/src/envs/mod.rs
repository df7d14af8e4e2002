//! Built-in desk-scale environments: two cooperative Dec-POMDPs with
//! brute-force-computable optima, and the charged-particles simulator for
//! the trajectory-forecasting case study.

pub mod charges;
pub mod spread;
pub mod two_step;

pub use charges::{gen_dataset, simulate_charges, ChargesConfig, DatasetSplits, Scene};
pub use spread::{spread_optimal_return, SpreadConfig, SpreadGrid};
pub use two_step::{two_step_optimal_return, TwoStepGame};

use crate::env::{ActionId, EnvSpec};
use crate::error::Result;
use rand::rngs::StdRng;

pub struct StepOutcome {
    pub obs: Vec<Vec<f64>>,
    pub reward: f64,
    pub done: bool,
}

/// A Dec-POMDP instance. Environments are independent state machines; any
/// number may be stepped concurrently as long as each instance has one
/// driver.
pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Start a new episode, returning the initial per-agent observations.
    fn reset(&mut self, rng: &mut StdRng) -> Vec<Vec<f64>>;

    fn step(&mut self, actions: &[ActionId]) -> Result<StepOutcome>;

    /// Global state used by the centralized mixer during training.
    fn global_state(&self) -> Vec<f64>;

    /// The finite set of possible observation vectors, when one exists;
    /// enables categorical observation models and enumeration oracles.
    fn obs_vocab(&self) -> Option<Vec<Vec<f64>>> {
        None
    }
}

/// Environment selection used by the trainer and CLI.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EnvKind {
    TwoStep,
    Spread,
    Charges,
}

impl EnvKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "twostep" => Ok(EnvKind::TwoStep),
            "spread" => Ok(EnvKind::Spread),
            "charges" => Ok(EnvKind::Charges),
            other => Err(crate::error::Error::Config(format!(
                "unknown env {other:?} (expected twostep|spread|charges)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvKind::TwoStep => "twostep",
            EnvKind::Spread => "spread",
            EnvKind::Charges => "charges",
        }
    }
}
