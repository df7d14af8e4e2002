//! Train the full stack on the two-step coordination game and report the
//! greedy return against the exhaustive-search optimum.
//!
//! Run with: `cargo run --release --example train_twostep`

use stratlab::envs::{two_step_optimal_return, EnvKind};
use stratlab::trainer::{Trainer, TrainerConfig};

fn main() -> stratlab::Result<()> {
    let mut cfg = TrainerConfig::default();
    cfg.env = EnvKind::TwoStep;
    cfg.seed = 1;
    cfg.total_steps = 20_000;
    cfg.warmup_steps = 500;
    cfg.batch_pairs = 8;
    cfg.batch_episodes = 32;
    cfg.eps_anneal_steps = 15_000;
    cfg.lr_theta = 2e-3;
    cfg.target_interval = 150;
    cfg.d_z = 2;
    cfg.rnn_hidden = 8;
    cfg.attn_hidden = 6;
    cfg.mlp_hidden = 8;
    cfg.value_hidden = 16;
    cfg.mix_hidden = 8;
    cfg.channels = 6;
    cfg.ctx_dim = 6;

    let mut trainer = Trainer::new(cfg)?;
    let optimum = two_step_optimal_return();
    println!("exhaustive-search optimum: {optimum}");
    while trainer.global_step < trainer.cfg.total_steps {
        trainer.train_iteration()?;
        if trainer.global_step % 4000 < trainer.cfg.n_parallel_envs as u64 {
            let ret = trainer.greedy_eval(20, 7)?;
            println!("step {:>6}: greedy return {ret:.2} (eps {:.2})", trainer.global_step, trainer.epsilon());
        }
    }
    let final_ret = trainer.greedy_eval(50, 7)?;
    println!("final greedy return over 50 episodes: {final_ret:.2} / optimum {optimum}");
    Ok(())
}
