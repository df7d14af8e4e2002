//! Train on the spread grid world and compare the learned greedy return to
//! the dynamic-programming optimum over the joint state space.
//!
//! Run with: `cargo run --release --example train_spread`

use stratlab::envs::{spread_optimal_return, EnvKind, SpreadConfig};
use stratlab::trainer::{Trainer, TrainerConfig};

fn main() -> stratlab::Result<()> {
    let mut cfg = TrainerConfig::default();
    cfg.env = EnvKind::Spread;
    cfg.seed = 3;
    cfg.total_steps = 30_000;
    cfg.warmup_steps = 1000;
    cfg.batch_pairs = 8;
    cfg.batch_episodes = 16;
    cfg.eps_anneal_steps = 20_000;
    cfg.lr_theta = 2e-3;
    cfg.target_interval = 150;
    cfg.d_z = 2;
    cfg.rnn_hidden = 12;
    cfg.attn_hidden = 6;
    cfg.mlp_hidden = 12;
    cfg.value_hidden = 24;
    cfg.mix_hidden = 8;
    cfg.channels = 6;
    cfg.ctx_dim = 6;

    let optimum = spread_optimal_return(&SpreadConfig::default());
    println!("DP optimum over the joint state space: {optimum:.4}");

    let mut trainer = Trainer::new(cfg)?;
    while trainer.global_step < trainer.cfg.total_steps {
        trainer.train_iteration()?;
        if trainer.global_step % 6000 < trainer.cfg.n_parallel_envs as u64 {
            let ret = trainer.greedy_eval(10, 5)?;
            println!("step {:>6}: greedy return {ret:.4}", trainer.global_step);
        }
    }
    let final_ret = trainer.greedy_eval(20, 5)?;
    println!("final greedy return {final_ret:.4} vs optimum {optimum:.4}");
    println!("unique joint observations visited: {}", trainer.unique_obs_count());
    Ok(())
}
