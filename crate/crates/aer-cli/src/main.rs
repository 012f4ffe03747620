//! `aer`: configuration-driven harness around the reconstruction library.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 admissibility assumptions
//! violated, 3 solver failure, 4 infeasible admissible set.

mod config;
mod plots;
mod runner;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::{example_config, ExperimentConfig};
use runner::{
    apply_overrides, cmd_check, cmd_errors, cmd_forward, cmd_invert, cmd_reproduce, cmd_sweep,
    CliError, SweepAxis,
};

#[derive(Parser)]
#[command(name = "aer", version, about = "Asymptotic-expansion source reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured noise level.
    #[arg(long)]
    delta: Option<f64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also emit SVG plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the admissibility assumptions for a configuration.
    CheckAssumptions {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the asymptotic and finite-volume forward solvers.
    Forward {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate noisy observations and reconstruct the source.
    Invert {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Recompute the reconstruction and error bounds from stored observations.
    Errors {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run an inversion per sweep point, in parallel, and aggregate results.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated diffusion coefficients.
        #[arg(long)]
        mu_list: Option<String>,
        /// Comma-separated noise levels.
        #[arg(long)]
        delta_list: Option<String>,
        /// Seeds per sweep point (consecutive from the configured seed).
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Run one of the built-in example experiments end to end.
    ReproduceExample {
        /// Example number: 1, 2, or 3.
        example: u8,
        /// Optional configuration overriding the built-in preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: bool,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid configuration {}: {e}", path.display())))?;
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn load_common(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = load_config(&common.config)?;
    apply_overrides(
        &mut cfg,
        common.seed,
        common.delta,
        common.out.clone(),
        common.plots,
    );
    Ok(cfg)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("bad {what} value {s:?}: {e}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::CheckAssumptions { common } => {
            let cfg = load_common(&common)?;
            cmd_check(&cfg)
        }
        Command::Forward { common } => {
            let cfg = load_common(&common)?;
            let s = cmd_forward(&cfg)?;
            Ok(format!(
                "forward: rel_error_space_time={:.6} rel_error_t0={:.6} runtime_s={:.2} out={}",
                s.rel_error_space_time,
                s.rel_error_t0,
                s.runtime_s,
                cfg.outputs.directory.display()
            ))
        }
        Command::Invert { common } => {
            let cfg = load_common(&common)?;
            let s = cmd_invert(&cfg)?;
            Ok(format!(
                "invert: rel_error={:.6} delta1={:.6} delta1_bar={:.6} runtime_s={:.2} out={}",
                s.rel_error,
                s.delta1,
                s.delta1_bar,
                s.runtime_s,
                cfg.outputs.directory.display()
            ))
        }
        Command::Errors { common } => {
            let cfg = load_common(&common)?;
            let s = cmd_errors(&cfg)?;
            Ok(format!(
                "errors: rel_error={:.6} delta1={:.6} delta1_bar={:.6} out={}",
                s.rel_error,
                s.delta1,
                s.delta1_bar,
                cfg.outputs.directory.display()
            ))
        }
        Command::Sweep { common, mu_list, delta_list, seeds } => {
            let cfg = load_common(&common)?;
            let axis = match (mu_list, delta_list) {
                (Some(m), None) => SweepAxis::Mu(parse_list(&m, "mu")?),
                (None, Some(d)) => SweepAxis::Delta(parse_list(&d, "delta")?),
                (None, None) => {
                    return Err(CliError::Usage(
                        "sweep needs --mu-list or --delta-list".into(),
                    ))
                }
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage(
                        "sweep takes --mu-list or --delta-list, not both".into(),
                    ))
                }
            };
            let s = cmd_sweep(&cfg, axis, seeds)?;
            let slope = s
                .slope
                .map(|v| format!(" slope={v:.4}"))
                .unwrap_or_default();
            Ok(format!(
                "sweep: runs={} ok={}{} out={}",
                s.rows.len(),
                s.successes,
                slope,
                cfg.outputs.directory.display()
            ))
        }
        Command::ReproduceExample { example, config, seed, delta, out, plots } => {
            let mut cfg = match config {
                Some(path) => load_config(&path)?,
                None => example_config(example).ok_or_else(|| {
                    CliError::Usage(format!("unknown example {example} (known: 1, 2, 3)"))
                })?,
            };
            apply_overrides(&mut cfg, seed, delta, out, plots);
            let s = cmd_reproduce(&cfg)?;
            Ok(format!(
                "reproduce-example {example}:\n\
                 forward: rel_error_space_time={:.6} rel_error_t0={:.6} runtime_s={:.2}\n\
                 invert: rel_error={:.6} delta1={:.6} runtime_s={:.2}\n\
                 out={}",
                s.forward.rel_error_space_time,
                s.forward.rel_error_t0,
                s.forward.runtime_s,
                s.invert.rel_error,
                s.invert.delta1,
                s.invert.runtime_s,
                cfg.outputs.directory.display()
            ))
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(text) => println!("{text}"),
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
