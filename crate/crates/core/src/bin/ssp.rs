use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use ssp::experiments::{self, Case, ExperimentConfig};
use ssp::Error;

#[derive(Parser)]
#[command(name = "ssp", version, about = "SSP loss experiments on KS and dispersive-wave data")]
struct Cli {
    /// TOML or JSON config merged over the case defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulations and runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, global = true)]
    case: Option<Case>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the case and write the windowed dataset.
    Generate,
    /// Train every configured loss on shared splits and summarize.
    Compare,
    /// Score amplitude, phase and frequency variants of a test signal.
    MetricSweep,
    /// Loss landscape over two output-layer weights of a trained model.
    Hyperplane {
        /// Checkpoint to load; defaults to run 0 of the configured loss.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Recompute comparison statistics from run directories.
    Stats {
        /// Run directories or parents of them; defaults to `<out>/runs`.
        runs: Vec<PathBuf>,
    },
    /// Record the prediction spectrum after every update of a short run.
    Probe,
}

fn print<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = experiments::load_config(cli.config.as_deref(), cli.case)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let out = &cli.out;
    let cfg = config(cli)?;
    match &cli.command {
        Command::Generate => print(&experiments::cmd_generate(&cfg, out, cli.jobs)?)?,
        Command::Compare => {
            let report = experiments::cmd_compare(&cfg, out, cli.jobs)?;
            print(&report.summary)?;
            if report.diverged() > 0 {
                eprintln!("{} run(s) diverged", report.diverged());
                return Ok(false);
            }
        }
        Command::MetricSweep => {
            let rows = experiments::cmd_metric_sweep(&cfg.sweep, out)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.join("metric_sweep.csv").display());
        }
        Command::Hyperplane { checkpoint } => {
            let g = experiments::cmd_hyperplane(&cfg, out, checkpoint.as_deref(), cli.jobs)?;
            eprintln!(
                "wrote {}x{} grid around {:?} to {}",
                g.axis1.len(),
                g.axis2.len(),
                g.center,
                out.join("hyperplane.csv").display()
            );
        }
        Command::Stats { runs } => {
            let runs = if runs.is_empty() { vec![out.join("runs")] } else { runs.clone() };
            let tail = cfg.train.tail;
            print(&experiments::cmd_stats(&runs, tail, cfg.train.threshold_ssp, cfg.train.threshold_mse)?)?;
        }
        Command::Probe => {
            let report = experiments::cmd_probe(&cfg, out, cli.jobs)?;
            print(&report.signatures)?;
            if report.records.iter().any(|r| r.diverged.is_some()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(2),
                Error::BlowUp { .. } | Error::Diverged { .. } | Error::NonFiniteActivation { .. } => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
