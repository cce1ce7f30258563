//! The kernel-ratio model η**(x) = 5 / (5 + xᵀx) is smooth but far from
//! linear in x, so raw linear features stall early. A Nystrom feature map —
//! kernel similarities to m landmark points, whitened by the landmark Gram
//! matrix K(I,I)^{-1/2} — turns the same streaming SGD loop into an
//! approximate kernel method: ⟨Φ(s), Φ(t)⟩ ≈ k(s, t).
//!
//! Run with: `cargo run --release --example kernel_nystrom`

use streamglm::eval::{loss_vector, paired_excess, McSet};
use streamglm::runner::log_spaced_checkpoints;
use streamglm::synth::{draw, SynthModel, SynthSpec};
use streamglm::trainer::train_stream;
use streamglm::{FeatureMap, Kernel, KernelKind, Predictor, PredictorKind, SgdConfig};

fn main() -> streamglm::Result<()> {
    let spec = SynthSpec::new(SynthModel::KernelRatio, 3)?;
    let n = 100_000u64;
    let gamma = 0.05;
    let lambda = 1e-4;
    let m = 50;
    let (stream, problem) = draw(&spec, n);

    // Landmarks come from the input distribution itself; the map's output
    // dimension is the number of landmarks.
    let kernel = Kernel::new(KernelKind::Laplacian, 50.0)?;
    let fm = FeatureMap::nystrom(kernel, problem.sample_inputs(m, 99))?;
    println!("kernel_ratio (d = {}), Laplacian sigma = 50, {m} landmarks", spec.dim);

    // Sanity check the construction: restricted to the landmarks, the map
    // reproduces the kernel exactly.
    if let FeatureMap::Nystrom(nm) = &fm {
        let (z0, z1) = (&nm.landmarks()[0], &nm.landmarks()[1]);
        let dot = fm.map(z0)?.dot(&fm.map(z1)?);
        let k01 = kernel.eval(z0, z1)?;
        println!("<Phi(z0), Phi(z1)> = {dot:.12}   k(z0, z1) = {k01:.12}\n");
    }

    let mc = McSet::draw(&problem, 20_000, 1_000)?;
    let feats = mc.features(&fm)?;
    let ref_star_star = loss_vector(spec.fam, &mc, &mc.etas)?;

    let mut cfg = SgdConfig::new(gamma);
    cfg.lambda = lambda;
    let checkpoints = log_spaced_checkpoints(5, n);
    println!("{:>10} {:>16} {:>16}", "iteration", "param_avg", "pred_avg_taylor");
    let (_, _) = train_stream(&cfg, spec.fam, &fm, stream, &checkpoints, |state| {
        let mut line = format!("{:>10}", state.n());
        for kind in [PredictorKind::ParamAvg, PredictorKind::PredAvgTaylor] {
            let pred = Predictor::new(kind, spec.fam, &fm, state)?;
            let etas = pred.natural_batch(&feats)?;
            let (excess, _) = paired_excess(spec.fam, &mc, &etas, &ref_star_star)?;
            line.push_str(&format!(" {excess:>16.6}"));
        }
        println!("{line}");
        Ok(Vec::new())
    })?;

    println!(
        "\nExcess risk vs F** keeps dropping through the pass: with enough landmarks\n\
         the (regularized) kernel class can approach the true conditional mean. At\n\
         this step size the Taylor-corrected prediction average tracks the averaged\n\
         iterate closely; its edge appears at larger gamma, where the stationary\n\
         noise it corrects for dominates (see the scaling_exponents example)."
    );
    Ok(())
}
