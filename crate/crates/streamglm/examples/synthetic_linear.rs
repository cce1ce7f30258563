//! One pass of constant-step SGD on the sin-sum logistic model
//! (η**(x) = sin x₁ + sin x₂ — no linear score can represent it), then a
//! side-by-side of all four prediction rules:
//!
//!   last            the final iterate θ_n
//!   param_avg       the averaged iterate θ̄_n
//!   pred_avg_exact  the average of the n+1 per-iterate predictions
//!   pred_avg_taylor its second-order approximation from (θ̄_n, iterate cov)
//!
//! Excess risk is reported against two benchmarks on a common Monte-Carlo
//! set: 𝓕**, the risk of the true conditional mean, and 𝓕*, the risk of the
//! best *linear* score (fit offline on μ**-labeled draws).
//!
//! Run with: `cargo run --release --example synthetic_linear`

use streamglm::eval::{fit_best_linear, loss_vector, paired_excess, McSet};
use streamglm::synth::{draw, SynthModel, SynthSpec};
use streamglm::{FeatureMap, Predictor, PredictorKind, Sample, SgdConfig, TrainerState};

fn main() -> streamglm::Result<()> {
    let spec = SynthSpec::new(SynthModel::SinSum, 11)?;
    let n = 100_000u64;
    let gamma = 0.1;
    let (stream, problem) = draw(&spec, n);
    let fm = FeatureMap::linear(spec.dim);

    let mut cfg = SgdConfig::new(gamma);
    // The exact prediction average replays the stored iterates at every
    // evaluation point; a strided history keeps that replay affordable.
    cfg.store_history = true;
    cfg.history_stride = 20;
    let mut state = TrainerState::new(&cfg, fm.output_dim())?;
    for s in stream {
        state.step(spec.fam, &fm, &s?)?;
    }

    // Common evaluation set; pairing losses point-by-point cancels most of
    // the Monte-Carlo noise out of the excess-risk estimates.
    let mc = McSet::draw(&problem, 20_000, 1_000)?;
    let feats = mc.features(&fm)?;
    let ref_star_star = loss_vector(spec.fam, &mc, &mc.etas)?;

    // The best linear benchmark: fit on a separate draw labeled with the
    // true conditional means, so it is noise-free up to the fit tolerance.
    let fit_set = McSet::draw(&problem, 20_000, 7_777)?;
    let fit_data: Vec<Sample> = fit_set
        .xs
        .iter()
        .zip(fit_set.mu.iter())
        .map(|(x, &mu)| Sample { x: x.clone(), y: mu })
        .collect();
    let theta_star = fit_best_linear(spec.fam, &fm, &fit_data, 0.0)?;
    let ref_star = loss_vector(spec.fam, &mc, &(&feats * &theta_star))?;

    println!("sin_sum logistic, n = {n}, gamma = {gamma}");
    println!("best linear score theta* = ({:.4}, {:.4})\n", theta_star[0], theta_star[1]);
    println!("{:<16} {:>16} {:>16}", "predictor", "excess vs F**", "excess vs F*");
    for kind in [
        PredictorKind::Last,
        PredictorKind::ParamAvg,
        PredictorKind::PredAvgExact,
        PredictorKind::PredAvgTaylor,
    ] {
        let pred = Predictor::new(kind, spec.fam, &fm, &state)?;
        let etas = pred.natural_batch(&feats)?;
        let (e2, se2) = paired_excess(spec.fam, &mc, &etas, &ref_star_star)?;
        let (e1, se1) = paired_excess(spec.fam, &mc, &etas, &ref_star)?;
        println!("{:<16} {e2:>9.6} ±{se2:.6} {e1:>9.6} ±{se1:.6}", kind.name());
    }

    println!(
        "\nEvery linear-score rule keeps a bias gap to F**. Against F* the averaged\n\
         iterate only reaches zero, while the prediction averages can dip below it:\n\
         averaging predictions leaves the linear class. The Taylor correction tracks\n\
         the exact prediction average without storing any history."
    );
    Ok(())
}
