//! Watch the variational MI lower bound tighten on the two-step game:
//! collect on-policy pairs, then run posterior tightening steps and print
//! the bound estimate climbing.
//!
//! Run with: `cargo run --release --example mi_bound_toy`

use rand::rngs::StdRng;
use rand::SeedableRng;
use stratlab::encode::EncodeSpec;
use stratlab::env::{segment_trajectory, SamplePair};
use stratlab::envs::{Env, TwoStepGame};
use stratlab::nn::RmsProp;
use stratlab::predict::posterior::{kl_tighten_step, TightenItem, TightenOwner};
use stratlab::trainer::{mi_estimate_value, pair_of_episode, ModelConfig, Models};
use stratlab::value::boltzmann_joint;

fn main() -> stratlab::Result<()> {
    let mut env = TwoStepGame::new(2)?;
    let spec = env.spec().clone();
    let mut mc = ModelConfig::new(2, EncodeSpec::rl(spec.obs_dim, spec.n_actions), 3);
    mc.d_z = 1;
    mc.rnn_hidden = 8;
    mc.attn_hidden = 6;
    mc.mlp_hidden = 8;
    mc.value_hidden = 8;
    mc.channels = 6;
    mc.ctx_dim = 6;
    mc.obs_vocab = env.obs_vocab();
    let mut models = Models::new(mc, 42);
    let mut rng = StdRng::seed_from_u64(7);

    // collect Boltzmann-on-policy episodes with recorded strategies
    let mut pairs: Vec<SamplePair<_>> = Vec::new();
    for _ in 0..128 {
        let mut traj = stratlab::env::JointTrajectory::new(2);
        let mut obs = env.reset(&mut rng);
        let strategy = models.latent.sample_strategy(&models.omega, &traj, &mut rng)?;
        loop {
            let q = models.qnets.q_now(&models.theta, &traj, &obs, &strategy.z_a, &strategy.z_r);
            let joint = boltzmann_joint(&q);
            let u: f64 = rand::Rng::random(&mut rng);
            let mut acc = 0.0;
            let mut chosen = joint.last().unwrap().0.clone();
            for (acts, p) in &joint {
                acc += p;
                if u <= acc {
                    chosen = acts.clone();
                    break;
                }
            }
            let out = env.step(&chosen)?;
            traj.push_step(&obs, &chosen, out.reward, out.done);
            obs = out.obs;
            if out.done {
                break;
            }
        }
        let segs = segment_trajectory(&traj, 2)?;
        pairs.push(pair_of_episode(&traj, &segs, 0, 2, strategy));
    }

    let mut opt_phi = RmsProp::new(&models.phi, 5e-3, 0.99);
    let mut opt_xi = RmsProp::new(&models.xi, 5e-3, 0.99);
    for step in 0..60 {
        if step % 10 == 0 {
            let est = mi_estimate_value(&models, &pairs, spec.gamma, 2)?;
            println!(
                "tighten step {step:>3}: bound {:.4} +- {:.4} (identifiability {:.4} action {:.4} obs {:.4})",
                est.mean,
                est.std_error,
                est.per_pair.iter().map(|t| t.identifiability).sum::<f64>() / est.per_pair.len() as f64,
                est.per_pair.iter().map(|t| t.action).sum::<f64>() / est.per_pair.len() as f64,
                est.per_pair.iter().map(|t| t.observation).sum::<f64>() / est.per_pair.len() as f64,
            );
        }
        let items: Vec<TightenItem<'_>> = pairs
            .iter()
            .map(|p| TightenItem {
                history: &p.history,
                segment: &p.segment,
                next_obs: p.next_obs.as_ref(),
                z_cond: models.z_cond(&p.strategy),
                z_a: &p.strategy.z_a,
                z_r_pre: &p.strategy.z_r_pre,
            })
            .collect();
        kl_tighten_step(
            TightenOwner::Phi,
            &models.obs_post,
            &models.strat_post,
            &mut models.phi,
            &mut opt_phi,
            &items,
        )?;
        kl_tighten_step(
            TightenOwner::Xi,
            &models.obs_post,
            &models.strat_post,
            &mut models.xi,
            &mut opt_xi,
            &items,
        )?;
    }
    let est = mi_estimate_value(&models, &pairs, spec.gamma, 2)?;
    println!("final bound estimate: {:.4} +- {:.4}", est.mean, est.std_error);
    Ok(())
}
