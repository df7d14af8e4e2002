//! Trainer configuration: flat key-value file plus CLI overrides.

use std::path::PathBuf;

use crate::envs::EnvKind;
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    Rl,
    Forecast,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    NoF,
    NoGat,
}

impl Ablation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_f" => Ok(Ablation::NoF),
            "no_gat" => Ok(Ablation::NoGat),
            other => Err(Error::Config(format!(
                "unknown ablation {other:?} (expected full|no_f|no_gat)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoF => "no_f",
            Ablation::NoGat => "no_gat",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainerConfig {
    pub env: EnvKind,
    pub mode: Mode,
    pub seed: u64,
    pub total_steps: u64,
    pub n_parallel_envs: usize,
    /// Segment length s; 0 picks the per-env default.
    pub segment_len: usize,
    pub batch_pairs: usize,
    pub batch_episodes: usize,
    pub warmup_steps: u64,
    /// Gradient step every N lockstep iterations.
    pub update_every: u64,
    pub target_interval: u64,
    pub metrics_interval: u64,
    pub replay_capacity: usize,

    pub lambda_m: f64,
    pub lambda_mi: f64,
    pub lambda_e: f64,
    pub lambda_td: f64,

    pub lr_theta: f64,
    pub lr_omega: f64,
    pub lr_phi: f64,
    pub lr_xi: f64,
    pub lr_eta: f64,
    pub lr_psi: f64,

    pub alpha: f64,
    pub beta: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_steps: u64,

    pub d_z: usize,
    pub rnn_hidden: usize,
    pub attn_hidden: usize,
    pub mlp_hidden: usize,
    pub value_hidden: usize,
    pub mix_hidden: usize,
    pub channels: usize,
    pub ctx_dim: usize,
    pub use_gat: bool,

    pub imag_rollouts: usize,
    pub imag_depth: usize,

    // forecasting case study
    pub k_samples: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_particles: usize,
    pub charge_coupling: f64,
    pub charge_init_half_width: f64,
    pub charge_vel_std: f64,
    pub forecast_epochs: usize,
    pub forecast_batch: usize,
    pub ablation: Ablation,

    pub spread_horizon: usize,
    pub spread_grid: usize,
    pub out_dir: PathBuf,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            env: EnvKind::TwoStep,
            mode: Mode::Rl,
            seed: 0,
            total_steps: 20_000,
            n_parallel_envs: 8,
            segment_len: 0,
            batch_pairs: 32,
            batch_episodes: 32,
            warmup_steps: 1000,
            update_every: 1,
            target_interval: 200,
            metrics_interval: 500,
            replay_capacity: 2000,
            lambda_m: 1.0,
            lambda_mi: 0.1,
            lambda_e: 1.0,
            lambda_td: 1.0,
            lr_theta: 5e-4,
            lr_omega: 5e-4,
            lr_phi: 5e-4,
            lr_xi: 5e-4,
            lr_eta: 5e-4,
            lr_psi: 5e-4,
            alpha: 0.5,
            beta: 0.5,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_anneal_steps: 50_000,
            d_z: 16,
            rnn_hidden: 64,
            attn_hidden: 32,
            mlp_hidden: 64,
            value_hidden: 64,
            mix_hidden: 32,
            channels: 32,
            ctx_dim: 32,
            use_gat: true,
            imag_rollouts: 2,
            imag_depth: 1,
            k_samples: 5,
            n_train: 1500,
            n_val: 300,
            n_test: 300,
            n_particles: 5,
            charge_coupling: 0.5,
            charge_init_half_width: 2.5,
            charge_vel_std: 0.5,
            forecast_epochs: 4,
            forecast_batch: 16,
            ablation: Ablation::Full,
            spread_horizon: 8,
            spread_grid: 3,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl TrainerConfig {
    /// Effective segment length for the selected environment.
    pub fn effective_segment_len(&self) -> usize {
        if self.segment_len > 0 {
            return self.segment_len;
        }
        match (self.mode, self.env) {
            (Mode::Forecast, _) | (_, EnvKind::Charges) => 5,
            (_, EnvKind::TwoStep) => 1,
            (_, EnvKind::Spread) => 4,
        }
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for key {key:?}")))
        }
        match key {
            "env" => self.env = EnvKind::parse(value)?,
            "mode" => {
                self.mode = match value {
                    "rl" => Mode::Rl,
                    "forecast" => Mode::Forecast,
                    other => return Err(Error::Config(format!("unknown mode {other:?}"))),
                }
            }
            "seed" => self.seed = p(key, value)?,
            "total_steps" => self.total_steps = p(key, value)?,
            "n_parallel_envs" => self.n_parallel_envs = p(key, value)?,
            "segment_len" => self.segment_len = p(key, value)?,
            "batch_pairs" => self.batch_pairs = p(key, value)?,
            "batch_episodes" => self.batch_episodes = p(key, value)?,
            "warmup_steps" => self.warmup_steps = p(key, value)?,
            "update_every" => self.update_every = p(key, value)?,
            "target_interval" => self.target_interval = p(key, value)?,
            "metrics_interval" => self.metrics_interval = p(key, value)?,
            "replay_capacity" => self.replay_capacity = p(key, value)?,
            "lambda_m" => self.lambda_m = p(key, value)?,
            "lambda_mi" => self.lambda_mi = p(key, value)?,
            "lambda_e" => self.lambda_e = p(key, value)?,
            "lambda_td" => self.lambda_td = p(key, value)?,
            "lr_theta" => self.lr_theta = p(key, value)?,
            "lr_omega" => self.lr_omega = p(key, value)?,
            "lr_phi" => self.lr_phi = p(key, value)?,
            "lr_xi" => self.lr_xi = p(key, value)?,
            "lr_eta" => self.lr_eta = p(key, value)?,
            "lr_psi" => self.lr_psi = p(key, value)?,
            "alpha" => self.alpha = p(key, value)?,
            "beta" => self.beta = p(key, value)?,
            "eps_start" => self.eps_start = p(key, value)?,
            "eps_end" => self.eps_end = p(key, value)?,
            "eps_anneal_steps" => self.eps_anneal_steps = p(key, value)?,
            "d_z" => self.d_z = p(key, value)?,
            "rnn_hidden" => self.rnn_hidden = p(key, value)?,
            "attn_hidden" => self.attn_hidden = p(key, value)?,
            "mlp_hidden" => self.mlp_hidden = p(key, value)?,
            "value_hidden" => self.value_hidden = p(key, value)?,
            "mix_hidden" => self.mix_hidden = p(key, value)?,
            "channels" => self.channels = p(key, value)?,
            "ctx_dim" => self.ctx_dim = p(key, value)?,
            "use_gat" => self.use_gat = p(key, value)?,
            "imag_rollouts" => self.imag_rollouts = p(key, value)?,
            "imag_depth" => self.imag_depth = p(key, value)?,
            "k_samples" => self.k_samples = p(key, value)?,
            "n_train" => self.n_train = p(key, value)?,
            "n_val" => self.n_val = p(key, value)?,
            "n_test" => self.n_test = p(key, value)?,
            "n_particles" => self.n_particles = p(key, value)?,
            "charge_coupling" => self.charge_coupling = p(key, value)?,
            "charge_init_half_width" => self.charge_init_half_width = p(key, value)?,
            "charge_vel_std" => self.charge_vel_std = p(key, value)?,
            "forecast_epochs" => self.forecast_epochs = p(key, value)?,
            "forecast_batch" => self.forecast_batch = p(key, value)?,
            "ablation" => self.ablation = Ablation::parse(value)?,
            "spread_horizon" => self.spread_horizon = p(key, value)?,
            "spread_grid" => self.spread_grid = p(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parse a flat `key = value` file; `#` starts a comment.
    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<TrainerConfig> {
        let mut cfg = TrainerConfig::default();
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.apply_kv(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}
