use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use dmve_cli::{commands, exit_code, plot, sweep};

#[derive(Parser)]
#[command(name = "dmve", version, about = "Dynamic-horizon value expansion on pixel control tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; writes metrics.csv, final.ckpt and config.txt into OUT.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint with the noise-free policy.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "bouncing_dot")]
        env: String,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a grid of training runs over H or K and seeds.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cells run concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Render metrics CSVs to an SVG line chart.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Group files by the `KEY=VALUE` fragment in their paths.
        #[arg(long)]
        group_by: Option<String>,
        #[arg(long, default_value = plot::DEFAULT_METRIC)]
        metric: String,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let s = commands::train(&config, &out)?;
            let last = s.final_eval().map_or(f64::NAN, |e| e.mean);
            println!(
                "{} train steps, {} env steps, final eval return {last:.3}",
                s.train_steps(),
                s.env_steps
            );
        }
        Command::Eval { ckpt, env, episodes, seed } => {
            let r = commands::eval(&ckpt, &env, episodes, seed)?;
            println!("{:.4} ± {:.4}", r.mean, r.std);
        }
        Command::Sweep { spec, out, parallel } => {
            let spec = sweep::SweepSpec::from_file(&spec)?;
            let rows = sweep::run_sweep(&spec, &out, parallel)?;
            let failed = rows.iter().filter(|r| !r.ok()).count();
            println!(
                "{} cells, {failed} failed; summary in {}",
                rows.len(),
                sweep::summary_path(&out).display()
            );
            if failed > 0 {
                anyhow::bail!("{failed} sweep cells failed");
            }
        }
        Command::Plot { inputs, out, group_by, metric } => {
            let groups = plot::aggregate(&inputs, &metric, group_by.as_deref())?;
            std::fs::write(&out, plot::render_svg(&groups, &metric))
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
