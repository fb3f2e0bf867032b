//! Command-line front end: single runs, parameter sweeps, and the
//! centralized reference optimum.

use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedsched::harness::{
    baseline_f0, run, sweep, sweep_summary_csv, write_csv, HarnessError, SystemConfig,
};

#[derive(Parser)]
#[command(name = "fedsched", about = "Deterministic federated-scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to a flat `key = value` config file.
    #[arg(long)]
    config: String,
    /// Override a config field, e.g. --set beta=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and write its metrics CSV.
    Run(ConfigArgs),
    /// Run a one-axis parameter sweep across several seeds.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Config field to vary.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Number of seeds per value (master seed, master seed + 1, ...).
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Print the centralized optimum F0 for the configured dataset.
    Baseline(ConfigArgs),
}

fn load_config(args: &ConfigArgs) -> Result<SystemConfig, HarnessError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", args.config)))?;
    let mut cfg = SystemConfig::parse(&text)?;
    for set in &args.sets {
        let (key, value) = set
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got {set:?}")))?;
        cfg.set_field(key.trim(), value)?;
    }
    Ok(cfg)
}

fn main_inner() -> Result<(), HarnessError> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            let out = run(&cfg)?;
            fs::write(&cfg.output, write_csv(&out.rows))?;
            if let Some(last) = out.rows.last() {
                println!(
                    "run {} policy {} seed {}: final gap {} accuracy {} -> {}",
                    cfg.run_id, last.policy, cfg.seed, last.gap, last.accuracy, cfg.output
                );
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
        } => {
            if values.is_empty() {
                return Err(HarnessError::Config("--values must not be empty".into()));
            }
            let cfg = load_config(&config)?;
            let (rows, summaries) = sweep(&cfg, &axis, &values, seeds)?;
            fs::write(&cfg.output, write_csv(&rows))?;
            print!("{}", sweep_summary_csv(&summaries));
        }
        Command::Baseline(args) => {
            let cfg = load_config(&args)?;
            println!("F0 = {}", baseline_f0(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
