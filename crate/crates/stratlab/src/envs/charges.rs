//! Charged-particle 2-D simulator: softened Coulomb forces, leapfrog
//! integration, elastic reflection at the box walls.
//!
//! Force on particle i: `sum_{j!=i} c q_i q_j (p_i - p_j) / max(|p_i-p_j|^3, eps)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ChargesConfig {
    pub n_particles: usize,
    /// Number of recorded time steps (including the initial state).
    pub t_steps: usize,
    pub dt: f64,
    pub box_half_width: f64,
    /// Interaction constant c.
    pub coupling: f64,
    /// Softening floor on |r|^3 in the force denominator.
    pub softening: f64,
    /// Std of the Gaussian initial velocities.
    pub vel_std: f64,
    /// Half-width of the centered spawn region for initial positions
    /// (uniform within it); interactions stay strong when this is well
    /// inside the box.
    pub init_half_width: f64,
}

impl Default for ChargesConfig {
    fn default() -> Self {
        ChargesConfig {
            n_particles: 5,
            t_steps: 25,
            dt: 0.1,
            box_half_width: 5.0,
            coupling: 1.0,
            softening: 0.01,
            vel_std: 0.5,
            init_half_width: 1.5,
        }
    }
}

/// A simulated scene: positions/velocities of all particles over T steps.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Scene {
    pub charges: Vec<f64>,
    /// `pos[t][i] = [x, y]`.
    pub pos: Vec<Vec<[f64; 2]>>,
    pub vel: Vec<Vec<[f64; 2]>>,
    pub box_half_width: f64,
}

impl Scene {
    pub fn n_particles(&self) -> usize {
        self.charges.len()
    }

    pub fn t_steps(&self) -> usize {
        self.pos.len()
    }
}

pub fn forces(
    pos: &[[f64; 2]],
    charges: &[f64],
    coupling: f64,
    softening: f64,
) -> Vec<[f64; 2]> {
    let n = pos.len();
    let mut out = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = pos[i][0] - pos[j][0];
            let dy = pos[i][1] - pos[j][1];
            let r = (dx * dx + dy * dy).sqrt();
            let denom = (r * r * r).max(softening);
            let f = coupling * charges[i] * charges[j] / denom;
            out[i][0] += f * dx;
            out[i][1] += f * dy;
        }
    }
    out
}

fn reflect(p: &mut f64, v: &mut f64, half: f64) {
    // elastic walls; a single fold suffices for moderate dt
    if *p > half {
        *p = 2.0 * half - *p;
        *v = -*v;
    } else if *p < -half {
        *p = -2.0 * half - *p;
        *v = -*v;
    }
}

/// Leapfrog (kick-drift-kick) from explicit initial conditions, recording a
/// state every `substeps` integrator steps with step size `dt / substeps`.
/// `substeps = 1` is the production path; larger values provide the
/// fine-step reference for accuracy checks.
pub fn integrate(
    init_pos: &[[f64; 2]],
    init_vel: &[[f64; 2]],
    charges: &[f64],
    cfg: &ChargesConfig,
    substeps: usize,
) -> Scene {
    assert!(substeps >= 1);
    let n = init_pos.len();
    let h = cfg.dt / substeps as f64;
    let mut pos = init_pos.to_vec();
    let mut vel = init_vel.to_vec();
    let mut scene = Scene {
        charges: charges.to_vec(),
        pos: vec![pos.clone()],
        vel: vec![vel.clone()],
        box_half_width: cfg.box_half_width,
    };
    let mut f = forces(&pos, charges, cfg.coupling, cfg.softening);
    for _ in 1..cfg.t_steps {
        for _ in 0..substeps {
            for i in 0..n {
                vel[i][0] += 0.5 * h * f[i][0];
                vel[i][1] += 0.5 * h * f[i][1];
                pos[i][0] += h * vel[i][0];
                pos[i][1] += h * vel[i][1];
                reflect(&mut pos[i][0], &mut vel[i][0], cfg.box_half_width);
                reflect(&mut pos[i][1], &mut vel[i][1], cfg.box_half_width);
            }
            f = forces(&pos, charges, cfg.coupling, cfg.softening);
            for i in 0..n {
                vel[i][0] += 0.5 * h * f[i][0];
                vel[i][1] += 0.5 * h * f[i][1];
            }
        }
        scene.pos.push(pos.clone());
        scene.vel.push(vel.clone());
    }
    scene
}

/// Simulate a fresh scene: charges uniform in {-1, +1}, positions uniform in
/// the box, velocities Gaussian.
pub fn simulate_charges(cfg: &ChargesConfig, seed: u64) -> Result<Scene> {
    if cfg.n_particles < 2 {
        return Err(Error::invalid_argument("need at least two particles"));
    }
    if cfg.t_steps < 2 {
        return Err(Error::invalid_argument("need at least two time steps"));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let charges: Vec<f64> = (0..cfg.n_particles)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let spawn = cfg.init_half_width.min(cfg.box_half_width);
    let init_pos: Vec<[f64; 2]> = (0..cfg.n_particles)
        .map(|_| [rng.random_range(-spawn..spawn), rng.random_range(-spawn..spawn)])
        .collect();
    let init_vel: Vec<[f64; 2]> = (0..cfg.n_particles)
        .map(|_| {
            let vx: f64 = rng.sample(StandardNormal);
            let vy: f64 = rng.sample(StandardNormal);
            [vx * cfg.vel_std, vy * cfg.vel_std]
        })
        .collect();
    Ok(integrate(&init_pos, &init_vel, &charges, cfg, 1))
}

/// Total momentum (unit masses).
pub fn total_momentum(vel: &[[f64; 2]]) -> [f64; 2] {
    let mut p = [0.0; 2];
    for v in vel {
        p[0] += v[0];
        p[1] += v[1];
    }
    p
}

/// Kinetic + unsoftened Coulomb potential energy; valid as a drift probe
/// while separations stay well above the softening scale.
pub fn total_energy(pos: &[[f64; 2]], vel: &[[f64; 2]], charges: &[f64], coupling: f64) -> f64 {
    let mut e = 0.0;
    for v in vel {
        e += 0.5 * (v[0] * v[0] + v[1] * v[1]);
    }
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let dx = pos[i][0] - pos[j][0];
            let dy = pos[i][1] - pos[j][1];
            let r = (dx * dx + dy * dy).sqrt();
            e += coupling * charges[i] * charges[j] / r;
        }
    }
    e
}

/// Scene dataset with split metadata.
#[derive(Clone, Debug)]
pub struct DatasetSplits {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
    pub t_total: usize,
    pub t_obs: usize,
}

fn split_seed(master: u64, split: u64, idx: u64) -> u64 {
    // splitmix64 over a namespaced input keeps the splits disjoint
    let mut z = master
        .wrapping_add(split.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(idx.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Generate disjoint-seed train/val/test scene sets. `T = 25`, `T_obs = 10`
/// recorded as split metadata.
pub fn gen_dataset(
    cfg: &ChargesConfig,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<DatasetSplits> {
    if n_train < 1 || n_val < 1 || n_test < 1 {
        return Err(Error::invalid_argument("split sizes must be >= 1"));
    }
    let gen_split = |split: u64, n: usize| -> Result<Vec<Scene>> {
        (0..n)
            .map(|i| simulate_charges(cfg, split_seed(seed, split, i as u64)))
            .collect()
    };
    Ok(DatasetSplits {
        train: gen_split(0, n_train)?,
        val: gen_split(1, n_val)?,
        test: gen_split(2, n_test)?,
        t_total: cfg.t_steps,
        t_obs: 10,
    })
}

pub fn write_scenes(path: impl AsRef<Path>, scenes: &[Scene]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in scenes {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenes(path: impl AsRef<Path>) -> Result<Vec<Scene>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_straight_line_motion() {
        let cfg = ChargesConfig { coupling: 0.0, t_steps: 10, ..ChargesConfig::default() };
        let scene = integrate(
            &[[0.0, 0.0], [1.0, 1.0]],
            &[[0.5, 0.25], [-0.3, 0.1]],
            &[1.0, -1.0],
            &cfg,
            1,
        );
        for t in 0..10 {
            let expect = [0.0 + 0.5 * 0.1 * t as f64, 0.0 + 0.25 * 0.1 * t as f64];
            assert!((scene.pos[t][0][0] - expect[0]).abs() < 1e-12);
            assert!((scene.pos[t][0][1] - expect[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn opposite_charges_attract_and_match_fine_integrator() {
        let cfg = ChargesConfig { t_steps: 10, ..ChargesConfig::default() };
        let init_pos = [[-1.0, 0.0], [1.0, 0.0]];
        let init_vel = [[0.0, 0.0], [0.0, 0.0]];
        let charges = [1.0, -1.0];
        let coarse = integrate(&init_pos, &init_vel, &charges, &cfg, 1);
        let fine = integrate(&init_pos, &init_vel, &charges, &cfg, 100);
        let sep = |s: &Scene, t: usize| {
            let dx = s.pos[t][0][0] - s.pos[t][1][0];
            let dy = s.pos[t][0][1] - s.pos[t][1][1];
            (dx * dx + dy * dy).sqrt()
        };
        for t in 1..6 {
            assert!(sep(&coarse, t) < sep(&coarse, t - 1), "separation must shrink");
            assert!(
                (sep(&coarse, t) - sep(&fine, t)).abs() < 1e-3,
                "coarse/fine disagree at t={t}: {} vs {}",
                sep(&coarse, t),
                sep(&fine, t)
            );
        }
    }

    #[test]
    fn momentum_conserved_without_wall_contact() {
        let cfg = ChargesConfig { t_steps: 25, ..ChargesConfig::default() };
        let scene = integrate(
            &[[-1.0, 0.3], [1.2, -0.4], [0.1, 1.1]],
            &[[0.1, 0.0], [-0.05, 0.1], [0.0, -0.08]],
            &[1.0, -1.0, 1.0],
            &cfg,
            1,
        );
        let p0 = total_momentum(&scene.vel[0]);
        for t in 1..scene.t_steps() {
            // no wall contact for these gentle initial conditions
            assert!(scene.pos[t].iter().all(|p| p[0].abs() < 5.0 && p[1].abs() < 5.0));
            let p = total_momentum(&scene.vel[t]);
            assert!((p[0] - p0[0]).abs() < 1e-8 && (p[1] - p0[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn energy_drift_below_tolerance() {
        let cfg = ChargesConfig { t_steps: 25, ..ChargesConfig::default() };
        let scene = integrate(
            &[[-3.0, 0.0], [3.0, 0.2], [0.0, -3.0]],
            &[[0.05, 0.02], [-0.05, 0.0], [0.0, 0.05]],
            &[1.0, 1.0, -1.0],
            &cfg,
            1,
        );
        let e0 = total_energy(&scene.pos[0], &scene.vel[0], &scene.charges, cfg.coupling);
        let e_end = total_energy(
            &scene.pos[24],
            &scene.vel[24],
            &scene.charges,
            cfg.coupling,
        );
        assert!(((e_end - e0) / e0.abs()).abs() < 1e-3, "drift {}", (e_end - e0) / e0);
    }

    #[test]
    fn positions_stay_in_box_and_generation_is_deterministic() {
        let cfg = ChargesConfig::default();
        let a = simulate_charges(&cfg, 7).unwrap();
        let b = simulate_charges(&cfg, 7).unwrap();
        assert_eq!(a, b);
        for t in 0..a.t_steps() {
            for p in &a.pos[t] {
                assert!(p[0].abs() <= 5.0 && p[1].abs() <= 5.0);
            }
        }
        assert!(simulate_charges(&ChargesConfig { n_particles: 1, ..cfg }, 0).is_err());
    }

    #[test]
    fn dataset_splits_are_deterministic_and_disjoint() {
        let cfg = ChargesConfig { n_particles: 3, t_steps: 6, ..ChargesConfig::default() };
        let d1 = gen_dataset(&cfg, 4, 2, 2, 123).unwrap();
        let d2 = gen_dataset(&cfg, 4, 2, 2, 123).unwrap();
        assert_eq!(d1.train, d2.train);
        assert_eq!(d1.val, d2.val);
        assert_eq!(d1.test, d2.test);
        assert_eq!(d1.t_obs, 10);
        // different splits start from different seeds
        assert_ne!(d1.train[0], d1.val[0]);
        assert_ne!(d1.val[0], d1.test[0]);
    }

    #[test]
    fn scene_jsonl_roundtrip() {
        let cfg = ChargesConfig { n_particles: 2, t_steps: 4, ..ChargesConfig::default() };
        let scenes = vec![simulate_charges(&cfg, 1).unwrap(), simulate_charges(&cfg, 2).unwrap()];
        let dir = std::env::temp_dir().join("stratlab-scene-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("scenes.jsonl");
        write_scenes(&path, &scenes).unwrap();
        assert_eq!(read_scenes(&path).unwrap(), scenes);
        std::fs::remove_dir_all(dir).ok();
    }
}
