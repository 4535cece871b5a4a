use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use tgnn::config::RunConfig;
use tgnn::experiment::{run_experiment, sweep};
use tgnn::export::export_checkpoint;
use tgnn::output::{sweep_csv, write_run};

#[derive(Parser)]
#[command(name = "tgnn", version, about = "Semi-supervised graph classification with twin encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value config file; defaults apply to missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides applied after the file, e.g. `--set variant=mp-sup`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(base.with_overrides(self.overrides.iter().map(String::as_str))?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and test every seed; writes reports, histories and checkpoints
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// One run per value of a parameter (d, P, label_ratio, lambda, M)
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        param: String,
        /// Comma-separated values; empty gives an empty table
        #[arg(long, default_value = "")]
        values: String,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Write the hidden graphs of a checkpoint as DOT files plus a manifest
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "hidden_graphs")]
        out: PathBuf,
        /// Drop edges with weight at or below this value
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
    },
    /// Gradient, oracle and invariant self-tests; exits nonzero on failure
    Check,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = config.load()?;
            let report = run_experiment(&cfg)?;
            write_run(&report, &out).with_context(|| format!("writing {}", out.display()))?;
            for o in &report.outcomes {
                println!("seed {}: test accuracy {:.4} (best epoch {})", o.seed, o.test_accuracy, o.best_epoch);
            }
            println!("{}: {:.4} +- {:.4} over {} seeds", cfg.variant, report.mean, report.std, report.outcomes.len());
        }
        Command::Sweep { config, param, values, out } => {
            let cfg = config.load()?;
            let values: Vec<String> =
                values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect();
            let rows = sweep(&cfg, &param, &values)?;
            std::fs::write(&out, sweep_csv(&param, &rows)).with_context(|| format!("writing {}", out.display()))?;
            for (v, r) in &rows {
                println!("{param}={v}: {:.4} +- {:.4}", r.mean, r.std);
            }
        }
        Command::Export { checkpoint, out, threshold } => {
            let entries = export_checkpoint(&checkpoint, &out, threshold)?;
            println!("wrote {} hidden graphs to {}", entries.len(), out.display());
        }
        Command::Check => {
            let results = tgnn::check::run_checks();
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
