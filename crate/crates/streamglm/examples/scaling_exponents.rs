//! How fast does each predictor's stationary excess shrink as the step size
//! γ is halved? Run the same experiment at γ and γ/2, average over
//! replications, then compare the tails of the two excess-risk curves. The
//! log₂ of the tail ratio is an empirical scaling exponent:
//!
//!   param_avg  excess ~ γ²  → exponent ≈ 2
//!   last       excess ~ γ   → exponent ≈ 1
//!
//! This drives `run_experiment` and `scaling_summary` directly — the same
//! code paths as the `streamglm run` / `streamglm scaling` subcommands.
//!
//! Run with: `cargo run --release --example scaling_exponents`

use streamglm::runner::scaling_summary;
use streamglm::{run_experiment, ExperimentConfig};

fn main() -> streamglm::Result<()> {
    let dir = tempfile::tempdir()?;
    let config = format!(
        "problem = synth\n\
         synth.model = wellspec_linear\n\
         synth.theta = 1.0, -1.0\n\
         synth.n = 100000\n\
         family = logistic\n\
         gammas = 0.4, 0.2\n\
         predictors = last, param_avg, pred_avg_taylor\n\
         replications = 4\n\
         mc.n = 20000\n\
         output.dir = {}\n",
        dir.path().display()
    );
    let cfg = ExperimentConfig::parse_str(&config)?;

    println!("running 2 step sizes x 4 replications of well-specified logistic SGD...");
    let summary = run_experiment(&cfg)?;
    for avg in &summary.averages {
        println!("  gamma = {:<4} -> {}", avg.gamma, avg.csv.display());
    }

    let by_gamma = |g: f64| {
        summary.averages.iter().find(|a| a.gamma == g).expect("both step sizes succeeded")
    };
    let report = scaling_summary(&by_gamma(0.4).csv, &by_gamma(0.2).csv, 5, None)?;

    let g = |v: Option<f64>| v.map_or("?".into(), |x| x.to_string());
    println!(
        "\ntail means of `{}` over the last {} checkpoints (gamma {} vs {}):\n",
        report.metric,
        report.tail_window,
        g(report.gamma_large),
        g(report.gamma_small)
    );
    println!(
        "{:<16} {:>13} {:>13} {:>9} {:>9}",
        "predictor", "tail(gamma)", "tail(gamma/2)", "ratio", "exponent"
    );
    for row in &report.rows {
        let flag = if row.flagged { "  [near noise floor]" } else { "" };
        println!(
            "{:<16} {:>13.3e} {:>13.3e} {:>9.3} {:>9.3}{flag}",
            row.predictor, row.tail_mean_large, row.tail_mean_small, row.ratio, row.exponent
        );
    }

    println!(
        "\nHalving gamma cuts the averaged iterate's stationary excess by about 4x\n\
         (exponent near 2), while the last iterate's excess has a first-order gamma\n\
         term and shrinks much more slowly. Rows are flagged when a tail is negative\n\
         or the sign flips between the two step sizes — there the excess has sunk\n\
         into Monte-Carlo noise and the exponent is not meaningful."
    );
    Ok(())
}
