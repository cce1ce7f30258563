//! The dataset path end to end: parse a delimited file, split it, fit
//! standardization on the training rows only, round-trip through the binary
//! cache, then make one SGD pass over the (shuffled) training rows and score
//! held-out negative log-likelihood. No synthetic oracles here — the test
//! split is the only judge.
//!
//! Run with: `cargo run --release --example csv_pipeline`

use std::io::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamglm::data::{load_csv, read_cache, split_standardize, write_cache, LabelColumn};
use streamglm::eval::heldout_nll;
use streamglm::{LinkFamily, Predictor, PredictorKind, SgdConfig, TrainerState};

fn main() -> streamglm::Result<()> {
    let dir = tempfile::tempdir()?;
    let csv_path = dir.path().join("toy.csv");
    let cache_path = dir.path().join("toy.cache");

    // A small binary classification file with a header row and string labels:
    // P(y = pos | x) follows a logistic model in two features.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut file = std::fs::File::create(&csv_path)?;
    writeln!(file, "f1,f2,outcome")?;
    for _ in 0..600 {
        let (a, b): (f64, f64) = (rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0);
        let p = 1.0 / (1.0 + (-(1.5 * a - b)).exp());
        let label = if rng.random::<f64>() < p { "pos" } else { "neg" };
        writeln!(file, "{a},{b},{label}")?;
    }
    drop(file);

    // Parse (header auto-detected, "pos" -> 1), split 80/20, standardize on
    // the training rows, and persist the result as a binary cache.
    let raw = load_csv(&csv_path, LabelColumn::Last, "pos", b',')?;
    let ds = split_standardize(raw, 0.2, 0)?;
    write_cache(&ds, &cache_path)?;
    let ds = read_cache(&cache_path)?; // bit-for-bit identical to `ds`

    let split = ds.split().expect("split_standardize attaches indices");
    let stats = ds.stats().expect("split_standardize attaches statistics");
    println!("{} rows -> {} train / {} test", ds.n(), split.train.len(), split.test.len());
    let means: Vec<String> = stats.mean.iter().map(|m| format!("{m:.3}")).collect();
    println!("train-fitted feature means: [{}]", means.join(", "));

    // One pass over the training rows in a seeded shuffled order.
    let mut order = split.train.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let fm = streamglm::FeatureMap::linear(ds.dim());
    let mut state = TrainerState::new(&SgdConfig::new(0.3), fm.output_dim())?;
    for s in ds.samples_by_index(&order) {
        state.step(LinkFamily::Logistic, &fm, &s?)?;
    }

    // Held-out NLL; ln 2 is the coin-flip baseline for binary labels.
    let test: Vec<_> = split.test.iter().map(|&i| ds.sample(i)).collect();
    println!("\nheld-out negative log-likelihood ({} rows):", test.len());
    for kind in [PredictorKind::Last, PredictorKind::ParamAvg, PredictorKind::PredAvgTaylor] {
        let pred = Predictor::new(kind, LinkFamily::Logistic, &fm, &state)?;
        let (nll, se) = heldout_nll(&pred, &test)?;
        println!("  {:<16} {nll:.4} ± {se:.4}", kind.name());
    }
    println!("  {:<16} {:.4}   (predict 1/2 everywhere)", "coin flip", std::f64::consts::LN_2);
    Ok(())
}
