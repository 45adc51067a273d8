use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use dmve::agent::{evaluate, run_training, Agent, EvalReport, RunSummary, TrainConfig};
use dmve::envs::EPISODE_LIMIT;

use crate::usage;

/// Reads and validates a config file; any problem is a usage error naming
/// the path or the offending key.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    if !path.is_file() {
        return Err(usage(format!("config file {} does not exist", path.display())));
    }
    TrainConfig::from_file(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn train(config: &Path, out: &Path) -> Result<RunSummary<f64>> {
    let cfg = load_config(config)?;
    let summary = run_training::<f64>(&cfg, Some(out)).with_context(|| format!("training run in {}", out.display()))?;
    Ok(summary)
}

pub const EVAL_CSV_HEADER: &str = "env,episodes,seed,mean,std";

/// Greedy evaluation of a checkpoint; appends one row to `eval.csv` next to
/// the checkpoint.
pub fn eval(ckpt: &Path, env: &str, episodes: usize, seed: u64) -> Result<EvalReport> {
    if !dmve::envs::ENV_NAMES.contains(&env) {
        return Err(usage(format!("unknown environment `{env}`")));
    }
    if episodes == 0 {
        return Err(usage("--episodes must be positive"));
    }
    if !ckpt.is_file() {
        return Err(usage(format!("checkpoint {} does not exist", ckpt.display())));
    }
    let agent = Agent::<f64>::read_checkpoint(ckpt, &TrainConfig::default())?;
    let report = evaluate(&agent, env, EPISODE_LIMIT, episodes, seed)?;
    let csv = ckpt.parent().unwrap_or(Path::new(".")).join("eval.csv");
    let fresh = !csv.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&csv)
        .with_context(|| format!("opening {}", csv.display()))?;
    if fresh {
        writeln!(f, "{EVAL_CSV_HEADER}")?;
    }
    writeln!(f, "{env},{episodes},{seed},{},{}", report.mean, report.std)?;
    Ok(report)
}
