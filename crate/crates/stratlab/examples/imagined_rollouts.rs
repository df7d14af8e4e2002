//! Plan over imagined futures: sample strategies, decode imagined segments
//! with the predictive model, and score them with the reward head.
//!
//! Run with: `cargo run --release --example imagined_rollouts`

use rand::rngs::StdRng;
use rand::SeedableRng;
use stratlab::env::JointTrajectory;
use stratlab::envs::EnvKind;
use stratlab::trainer::{imagined_rollout, Trainer, TrainerConfig};

fn main() -> stratlab::Result<()> {
    let mut cfg = TrainerConfig::default();
    cfg.env = EnvKind::TwoStep;
    cfg.seed = 2;
    cfg.total_steps = 4000;
    cfg.warmup_steps = 400;
    cfg.batch_pairs = 8;
    cfg.batch_episodes = 16;
    cfg.d_z = 2;
    cfg.rnn_hidden = 8;
    cfg.attn_hidden = 6;
    cfg.mlp_hidden = 8;
    cfg.value_hidden = 12;
    cfg.mix_hidden = 8;
    cfg.channels = 6;
    cfg.ctx_dim = 6;
    cfg.segment_len = 2;

    // a short training run so the predictor and reward head mean something
    let mut trainer = Trainer::new(cfg)?;
    trainer.run()?;

    let mut rng = StdRng::seed_from_u64(11);
    let start = JointTrajectory::new(2);
    println!("imagined rollouts from an empty history (segment length {}):", trainer.s);
    for i in 0..4 {
        let rollout = imagined_rollout(&trainer.models, &start, 1, trainer.s, trainer.gamma, &mut rng)?;
        let d = &rollout.decisions[0];
        println!(
            "  rollout {i}: J_m = {:+.4}, reward-head score {:+.4}, |z_A| = {:.3}",
            rollout.j_m,
            d.reward,
            d.strategy.z_a.frobenius()
        );
    }
    println!("(J_m = gamma^s * predicted segment return for depth-1 rollouts)");
    Ok(())
}
