//! Simulate charged-particle scenes, check the conservation properties of
//! the integrator, and write a JSONL scene file.
//!
//! Run with: `cargo run --release --example simulate_charges`

use stratlab::envs::charges::{
    gen_dataset, integrate, total_energy, total_momentum, write_scenes, ChargesConfig,
};

fn main() -> stratlab::Result<()> {
    let cfg = ChargesConfig::default();

    // momentum conservation between wall contacts
    let scene = integrate(
        &[[-1.0, 0.3], [1.2, -0.4], [0.1, 1.1]],
        &[[0.1, 0.0], [-0.05, 0.1], [0.0, -0.08]],
        &[1.0, -1.0, 1.0],
        &cfg,
        1,
    );
    let p0 = total_momentum(&scene.vel[0]);
    let p_end = total_momentum(scene.vel.last().unwrap());
    println!("momentum drift over {} steps: ({:.2e}, {:.2e})", scene.t_steps(), p_end[0] - p0[0], p_end[1] - p0[1]);

    let e0 = total_energy(&scene.pos[0], &scene.vel[0], &scene.charges, cfg.coupling);
    let e_end = total_energy(
        scene.pos.last().unwrap(),
        scene.vel.last().unwrap(),
        &scene.charges,
        cfg.coupling,
    );
    println!("relative energy drift: {:.2e}", (e_end - e0) / e0.abs());

    // dataset generation is deterministic per seed
    let data = gen_dataset(&cfg, 8, 2, 2, 42)?;
    println!(
        "generated {} train / {} val / {} test scenes (T={}, T_obs={})",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        data.t_total,
        data.t_obs
    );
    let out = std::env::temp_dir().join("stratlab_scenes.jsonl");
    write_scenes(&out, &data.train)?;
    println!("wrote {}", out.display());
    Ok(())
}
