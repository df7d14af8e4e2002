//! Trajectory bookkeeping: build episodes, segment them, store them in the
//! replay buffer, and sample (history, segment) training pairs.
//!
//! Run with: `cargo run --example replay_pairs`

use rand::rngs::StdRng;
use rand::SeedableRng;
use stratlab::env::{discounted_segment_weight, segment_trajectory, JointTrajectory, ReplayBuffer};

fn main() -> stratlab::Result<()> {
    // a 2-agent episode of 7 steps (so the last segment is padded)
    let mut traj = JointTrajectory::new(2);
    for t in 0..7 {
        let obs = vec![vec![t as f64, 0.0], vec![t as f64, 1.0]];
        let acts = vec![t % 3, (t + 1) % 3];
        traj.push_step(&obs, &acts, -1.0 + t as f64 * 0.1, t == 6);
    }

    let segments = segment_trajectory(&traj, 3)?;
    println!("episode of {} steps -> {} segments of s = 3", traj.len(), segments.len());
    for seg in &segments {
        println!(
            "  segment {}: valid mask {:?} discount weight {:.4}",
            seg.index,
            seg.valid_mask,
            discounted_segment_weight(seg.index, 3, 0.95)
        );
    }

    let mut buffer: ReplayBuffer<char> = ReplayBuffer::new(16, 3);
    buffer.push_episode(traj.clone(), vec!['a', 'b', 'c'])?;
    buffer.push_episode(traj, vec!['d', 'e', 'f'])?;
    println!("buffer holds {} episodes, {} pairs", buffer.len(), buffer.n_pairs());

    let mut rng = StdRng::seed_from_u64(3);
    let (pairs, with_replacement) = buffer.sample(4, &mut rng)?;
    println!("sampled {} pairs (with replacement: {with_replacement})", pairs.len());
    for p in &pairs {
        println!(
            "  episode {} segment {}: history len {} (= k*s), strategy record {:?}",
            p.episode_index,
            p.k,
            p.history.len(),
            p.strategy
        );
    }
    Ok(())
}
