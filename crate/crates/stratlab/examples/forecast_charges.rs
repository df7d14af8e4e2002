//! Small trajectory-forecasting study: train the latent/predictor stack on
//! charged-particle scenes, then compare ADE/FDE against the
//! constant-velocity baseline.
//!
//! Run with: `cargo run --release --example forecast_charges`

use stratlab::envs::charges::{gen_dataset, ChargesConfig};
use stratlab::forecast;
use stratlab::trainer::{Ablation, TrainerConfig};

fn main() -> stratlab::Result<()> {
    let mut cfg = TrainerConfig::default();
    cfg.seed = 5;
    cfg.n_train = 200;
    cfg.n_val = 20;
    cfg.n_test = 50;
    cfg.n_particles = 3;
    cfg.d_z = 4;
    cfg.rnn_hidden = 16;
    cfg.attn_hidden = 8;
    cfg.mlp_hidden = 16;
    cfg.channels = 12;
    cfg.ctx_dim = 12;
    cfg.forecast_epochs = 6;
    cfg.forecast_batch = 8;
    cfg.k_samples = 5;

    let charges_cfg = ChargesConfig { n_particles: cfg.n_particles, ..ChargesConfig::default() };
    let data = gen_dataset(&charges_cfg, cfg.n_train, cfg.n_val, cfg.n_test, cfg.seed)?;
    let baseline = forecast::baseline_report(&data.test, charges_cfg.dt)?;
    println!("constant-velocity baseline: ADE {:.4} FDE {:.4}", baseline.ade, baseline.fde);

    for ablation in [Ablation::Full, Ablation::NoF, Ablation::NoGat] {
        cfg.ablation = ablation;
        let report = forecast::run_case_study(&cfg)?;
        println!(
            "{:>6}: ADE {:.4} FDE {:.4} over {} test scenes",
            ablation.as_str(),
            report.ade,
            report.fde,
            report.per_scene.len()
        );
    }
    Ok(())
}
