//! Command-line front end: `run` executes an experiment config, `scaling`
//! compares the excess tails of two metric logs, and `bestlinear` fits and
//! caches the best-in-class reference for a dataset config.
//!
//! Exit codes: 0 on success, 1 on config/IO errors, 2 when replications
//! diverged (their metadata records the details and healthy replications
//! still produce output). Set `RAYON_NUM_THREADS` to cap parallelism.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use streamglm::config::ExperimentConfig;
use streamglm::runner::{fit_reference, run_experiment, scaling_summary};

#[derive(Parser)]
#[command(
    name = "streamglm",
    version,
    about = "Single-pass SGD for conditional exponential-family models, \
             with parameter- and prediction-averaged predictors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (gamma, lambda, replication) grid described by a config file.
    Run {
        /// Flat `key = value` config file.
        config: PathBuf,
    },
    /// Compare the excess tails of two metric logs — conventionally a step
    /// size and its half — and report the implied scaling exponents.
    Scaling {
        /// Metric CSV of the larger step size.
        log_large: PathBuf,
        /// Metric CSV of the halved step size.
        log_small: PathBuf,
        /// Number of final checkpoints to average over.
        #[arg(long, default_value_t = 5)]
        tail_window: usize,
        /// Metric to compare (defaults to the best excess metric present).
        #[arg(long)]
        metric: Option<String>,
    },
    /// Fit the best-in-class parameter on a dataset config's train split and
    /// cache it (with its held-out NLL) as `bestlinear.json`.
    Bestlinear {
        /// Flat `key = value` config file with `problem = data`.
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> streamglm::Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::parse_file(&config)?;
            let summary = run_experiment(&cfg)?;
            println!("config hash: {}", summary.config_hash);
            for avg in &summary.averages {
                println!(
                    "gamma={} lambda={}: averaged {} replication(s) -> {}",
                    avg.gamma,
                    avg.lambda,
                    avg.reps_used,
                    avg.csv.display()
                );
            }
            let failures = summary.failures();
            if failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for failure in &failures {
                    eprintln!("diverged: {failure}");
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Scaling { log_large, log_small, tail_window, metric } => {
            let report = scaling_summary(&log_large, &log_small, tail_window, metric.as_deref())?;
            match (report.gamma_large, report.gamma_small) {
                (Some(a), Some(b)) => println!(
                    "metric {} over the last {} checkpoints, gamma {a} vs {b}:",
                    report.metric, report.tail_window
                ),
                _ => println!(
                    "metric {} over the last {} checkpoints:",
                    report.metric, report.tail_window
                ),
            }
            for row in &report.rows {
                println!(
                    "  {:<16} tail {:>13.6e} vs {:>13.6e}  ratio {:>8.4}  exponent {:>7.4}{}",
                    row.predictor,
                    row.tail_mean_large,
                    row.tail_mean_small,
                    row.ratio,
                    row.exponent,
                    if row.flagged { "  [flagged: noise floor or sign flip]" } else { "" }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bestlinear { config } => {
            let cfg = ExperimentConfig::parse_file(&config)?;
            let report = fit_reference(&cfg)?;
            println!(
                "best-in-class reference (dimension {}, lambda {}): held-out NLL {:.6} ± {:.6}",
                report.feature_dim, report.lambda, report.nll, report.nll_se
            );
            println!("cached to {}", cfg.output_dir.join("bestlinear.json").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
