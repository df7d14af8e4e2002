//! Desk-scale cooperative multi-agent reinforcement learning laboratory.
//!
//! The crate implements a hierarchical latent-strategy architecture end to
//! end: a latent policy over per-agent individual and relational strategies,
//! variational mutual-information bounds with trainable posterior estimators,
//! a gated dilated-convolution segment predictor, planning over imagined
//! futures, monotonically mixed decomposed value learning, and a
//! surprise-driven data-gathering bonus. Everything runs on a small
//! double-precision autodiff substrate that is verified against central
//! finite differences, and ships with two enumerable cooperative testbeds
//! plus a charged-particles simulator for trajectory forecasting.
//!
//! Start with the runnable examples (`cargo run --example <name>`) or the
//! thin `stratlab` binary for train/eval/forecast/plot workflows.

pub mod env;
pub mod envs;
pub mod encode;
pub mod error;
pub mod forecast;
pub mod latent;
pub mod nn;
pub mod predict;
pub mod trainer;
pub mod value;

pub use error::{Error, Result};
