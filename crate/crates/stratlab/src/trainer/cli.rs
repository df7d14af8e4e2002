//! Command-line interface: `train`, `eval`, `forecast`, `plot`.
//!
//! Exit codes: 0 success, 2 bad configuration/usage, 3 numeric failure.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::forecast;

use super::config::{Mode, TrainerConfig};
use super::{metrics, plot, Trainer};

const USAGE: &str = "\
stratlab <command> [options]

commands:
  train     --env {twostep|spread} --steps N --seed S [--config FILE] [--out DIR] [--<key> <value>...]
  eval      --checkpoint BASE --episodes N [--env ...] [--<key> <value>...]
  forecast  --ablation {full|no_f|no_gat} [--seed S] [--out DIR] [--<key> <value>...]
  plot      --metrics FILE [--out DIR]

Any trainer config key can be overridden with --<key> <value>.
";

pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(Error::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            3
        }
        Err(err) => {
            eprintln!("error: {err}");
            eprintln!("{USAGE}");
            2
        }
    }
}

struct ArgMap {
    flags: Vec<(String, String)>,
}

impl ArgMap {
    fn parse(args: &[String]) -> Result<ArgMap> {
        let mut flags = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let key = args[i]
                .strip_prefix("--")
                .ok_or_else(|| Error::Config(format!("expected --flag, got {:?}", args[i])))?;
            let value = args
                .get(i + 1)
                .ok_or_else(|| Error::Config(format!("flag --{key} needs a value")))?;
            flags.push((key.to_string(), value.clone()));
            i += 2;
        }
        Ok(ArgMap { flags })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let pos = self.flags.iter().position(|(k, _)| k == key)?;
        Some(self.flags.remove(pos).1)
    }
}

fn load_config(map: &mut ArgMap) -> Result<TrainerConfig> {
    let mut cfg = match map.take("config") {
        Some(path) => TrainerConfig::from_file(path)?,
        None => TrainerConfig::default(),
    };
    // aliases used by the documented command lines
    if let Some(v) = map.take("steps") {
        cfg.apply_kv("total_steps", &v)?;
    }
    if let Some(v) = map.take("out") {
        cfg.apply_kv("out_dir", &v)?;
    }
    for (key, value) in map.flags.drain(..) {
        cfg.apply_kv(&key, &value)?;
    }
    Ok(cfg)
}

fn dispatch(args: &[String]) -> Result<()> {
    let Some(command) = args.first() else {
        return Err(Error::Config("missing command".into()));
    };
    match command.as_str() {
        "train" => {
            let mut map = ArgMap::parse(&args[1..])?;
            let cfg = load_config(&mut map)?;
            if cfg.mode != Mode::Rl {
                return Err(Error::Config("train runs RL mode; use forecast".into()));
            }
            let out_dir = cfg.out_dir.clone();
            let mut trainer = Trainer::new(cfg)?;
            trainer.run()?;
            std::fs::create_dir_all(&out_dir)?;
            trainer.metrics.write(out_dir.join("metrics.csv"))?;
            trainer.models.save(out_dir.join("checkpoint"))?;
            let ret = trainer.greedy_eval(20, trainer.cfg.seed)?;
            println!("trained {} steps on {}; greedy return over 20 episodes: {ret}",
                trainer.global_step, trainer.cfg.env.as_str());
            println!("metrics: {}", out_dir.join("metrics.csv").display());
            println!("checkpoint: {}", out_dir.join("checkpoint").display());
            Ok(())
        }
        "eval" => {
            let mut map = ArgMap::parse(&args[1..])?;
            let checkpoint = map
                .take("checkpoint")
                .ok_or_else(|| Error::Config("eval needs --checkpoint".into()))?;
            let episodes: usize = map
                .take("episodes")
                .unwrap_or_else(|| "100".to_string())
                .parse()
                .map_err(|_| Error::Config("bad --episodes".into()))?;
            let cfg = load_config(&mut map)?;
            let mut trainer = Trainer::new(cfg)?;
            trainer.models.load(PathBuf::from(&checkpoint))?;
            let ret = trainer.greedy_eval(episodes, trainer.cfg.seed)?;
            println!("mean greedy return over {episodes} episodes: {ret}");
            Ok(())
        }
        "forecast" => {
            let mut map = ArgMap::parse(&args[1..])?;
            let cfg = load_config(&mut map)?;
            let out_dir = cfg.out_dir.clone();
            let report = forecast::run_case_study(&cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join(format!("forecast_{}.json", cfg.ablation.as_str()));
            std::fs::write(&path, serde_json::to_string_pretty(&report.to_json())?)?;
            println!(
                "ablation {}: ADE {:.4} FDE {:.4} over {} scenes",
                cfg.ablation.as_str(),
                report.ade,
                report.fde,
                report.per_scene.len()
            );
            println!("report: {}", path.display());
            Ok(())
        }
        "plot" => {
            let mut map = ArgMap::parse(&args[1..])?;
            let metrics_path = map
                .take("metrics")
                .ok_or_else(|| Error::Config("plot needs --metrics FILE".into()))?;
            let out = map.take("out").unwrap_or_else(|| "out/plots".to_string());
            let rows = metrics::read_csv(&metrics_path)?;
            let files = plot::plot_metrics(&rows, &out)?;
            for f in files {
                println!("wrote {f}");
            }
            Ok(())
        }
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(Error::Config(format!("unknown command {other:?}"))),
    }
}
