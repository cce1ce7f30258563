//! Experiment orchestration: sweeps over (γ, λ, replication), per-run and
//! replication-averaged metric logs, scaling summaries from paired step-size
//! runs, and the best-in-class reference fit for real datasets.
//!
//! Every run is fully determined by its config: stream, Monte-Carlo, and
//! landmark seeds all derive from config values plus the replication index,
//! so re-running a config reproduces the output files byte for byte.
//! Replications (and the γ/λ grid) execute in parallel; cap the thread count
//! with the `RAYON_NUM_THREADS` environment variable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ExperimentConfig, FeatureConfig, FstarMode, ProblemConfig};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::eval::{fit_best_linear, loss_vector, mean_se, nll_vector, McSet, MetricLog, MetricRow};
use crate::family::Sample;
use crate::features::{FeatureMap, Kernel};
use crate::predictor::Predictor;
use crate::predictor::PredictorKind;
use crate::trainer::{train_stream, SgdConfig};

/// One (γ, λ, replication) training run: where its metrics went, or why it
/// failed. Divergence failures do not abort the experiment.
#[derive(Debug)]
pub struct RunRecord {
    pub gamma: f64,
    pub lambda: f64,
    pub replication: u32,
    /// Seed of this run's training stream (or train-order shuffle).
    pub seed: u64,
    /// Metric CSV path; `None` when the run failed.
    pub csv: Option<PathBuf>,
    pub failure: Option<String>,
}

/// Replication-averaged metrics for one (γ, λ) cell.
#[derive(Debug)]
pub struct AverageRecord {
    pub gamma: f64,
    pub lambda: f64,
    pub csv: PathBuf,
    pub rows: Vec<MetricRow>,
    /// Number of successful replications averaged over.
    pub reps_used: u32,
}

/// Everything `run` produced, in deterministic (γ, λ, replication) order.
#[derive(Debug)]
pub struct RunSummary {
    pub config_hash: String,
    pub runs: Vec<RunRecord>,
    pub averages: Vec<AverageRecord>,
}

impl RunSummary {
    /// Failure messages of diverged runs, if any.
    pub fn failures(&self) -> Vec<String> {
        self.runs
            .iter()
            .filter_map(|r| {
                r.failure.as_ref().map(|m| {
                    format!(
                        "gamma={} lambda={} replication={}: {m}",
                        r.gamma, r.lambda, r.replication
                    )
                })
            })
            .collect()
    }
}

/// Per-predictor tail comparison between two step sizes.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub predictor: String,
    /// Tail-mean excess in the first (larger-γ) log.
    pub tail_mean_large: f64,
    /// Tail-mean excess in the second (γ/2) log.
    pub tail_mean_small: f64,
    /// `tail_mean_large / tail_mean_small` (signed).
    pub ratio: f64,
    /// log₂ of the magnitude ratio — the implied exponent of the
    /// γ-dependence when the logs differ by a factor-2 step size.
    pub exponent: f64,
    /// Set when the tail means are unreliable: a negative parameter-average
    /// excess (noise floor reached) or a sign flip between the two logs.
    pub flagged: bool,
}

/// Output of [`scaling_summary`].
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub metric: String,
    pub tail_window: usize,
    /// Step sizes recovered from the logs' JSON sidecars, when present.
    pub gamma_large: Option<f64>,
    pub gamma_small: Option<f64>,
    pub rows: Vec<ScalingRow>,
}

/// Cached result of the best-in-class reference fit on a dataset problem:
/// the fitted parameter and its held-out negative log-likelihood.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestLinearReport {
    pub config_hash: String,
    pub feature_dim: usize,
    pub lambda: f64,
    pub theta: Vec<f64>,
    pub nll: f64,
    pub nll_se: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// `count` log-spaced checkpoints from 10 (or `n`, if smaller) up to and
/// including `n`, deduplicated after rounding.
pub fn log_spaced_checkpoints(count: usize, n: u64) -> Vec<u64> {
    let n = n.max(1);
    let count = count.max(1);
    let lo = 10.0f64.min(n as f64);
    let hi = n as f64;
    let mut out: Vec<u64> = (0..count)
        .map(|k| {
            let t = if count == 1 { 1.0 } else { k as f64 / (count as f64 - 1.0) };
            (lo * (hi / lo).powf(t)).round() as u64
        })
        .map(|c| c.clamp(1, n))
        .collect();
    *out.last_mut().expect("count >= 1") = n;
    out.dedup();
    out
}

/// Runs the full experiment grid described by `cfg`: for each step size,
/// regularization value, and replication, trains single-pass and evaluates
/// the configured predictors at log-spaced checkpoints, writing one CSV (and
/// JSON metadata sidecar) per run plus a replication-averaged CSV per
/// (γ, λ).
///
/// Synthetic problems report paired excess risk over the Bayes rule
/// (`excess_fstarstar`) and, when a reference mode is set, over the best
/// linear rule (`excess_fstar`). Dataset problems report held-out NLL
/// (`nll`) and, when `fhatstar.path` points at a `bestlinear` result, the
/// paired excess over it (`excess_fhatstar`). Each value row has a matching
/// `*_se` row; replication averaging takes the arithmetic mean of values and
/// combines standard errors as √(Σ se²)/R.
///
/// A diverged replication is recorded in its metadata sidecar and in the
/// returned summary, and the remaining runs continue.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    fs::create_dir_all(&cfg.output_dir)?;
    let assets = Assets::build(cfg)?;
    let checkpoints = log_spaced_checkpoints(cfg.checkpoint_count, assets.stream_len());
    let config_hash = cfg.hash();

    let mut jobs = Vec::new();
    for &gamma in &cfg.gammas {
        for &lambda in &cfg.lambdas {
            for rep in 0..cfg.replications {
                jobs.push((gamma, lambda, rep));
            }
        }
    }
    let outcomes: Vec<JobOutcome> = jobs
        .par_iter()
        .map(|&(gamma, lambda, rep)| {
            run_job(cfg, &assets, &checkpoints, &config_hash, gamma, lambda, rep)
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::new();
    let mut averages = Vec::new();
    for &gamma in &cfg.gammas {
        for &lambda in &cfg.lambdas {
            let cell: Vec<&JobOutcome> = outcomes
                .iter()
                .filter(|o| o.gamma == gamma && o.lambda == lambda)
                .collect();
            let done: Vec<&JobOutcome> = cell.iter().copied().filter(|o| o.rows.is_some()).collect();
            if !done.is_empty() {
                let rows = combine_replications(&done)?;
                let csv = cfg.output_dir.join(format!("avg_g{gamma}_l{lambda}.csv"));
                let mut buf = Vec::new();
                MetricLog::new(rows.clone()).write_csv(&mut buf, -1, assets.base_seed(cfg))?;
                write_atomic(&csv, &buf)?;

                let meta = AvgMeta {
                    config: cfg.canonical_pairs().into_iter().collect(),
                    config_hash: config_hash.clone(),
                    gamma,
                    lambda,
                    replication: -1,
                    seed: assets.base_seed(cfg),
                    n: assets.stream_len(),
                    checkpoints: checkpoints.clone(),
                    reps_used: done.iter().map(|o| o.rep).collect(),
                    failures: cell
                        .iter()
                        .filter_map(|o| {
                            o.failure
                                .as_ref()
                                .map(|m| FailureMeta { replication: o.rep, message: m.clone() })
                        })
                        .collect(),
                };
                write_atomic(&csv.with_extension("json"), &serde_json::to_vec_pretty(&meta)?)?;
                averages.push(AverageRecord {
                    gamma,
                    lambda,
                    csv,
                    rows,
                    reps_used: done.len() as u32,
                });
            }
        }
    }
    for o in outcomes {
        runs.push(RunRecord {
            gamma: o.gamma,
            lambda: o.lambda,
            replication: o.rep,
            seed: o.seed,
            csv: o.csv,
            failure: o.failure,
        });
    }
    Ok(RunSummary { config_hash, runs, averages })
}

/// Fits the best-in-class parameter for a dataset problem on the train
/// split, reports its held-out NLL, and caches the result as
/// `bestlinear.json` in the output directory. With linear features this is
/// the 𝓕̂* reference; with Nyström features, the 𝓕̂** analogue.
pub fn fit_reference(cfg: &ExperimentConfig) -> Result<BestLinearReport> {
    let ProblemConfig::Data(dc) = &cfg.problem else {
        return Err(Error::Config("bestlinear requires problem = data".into()));
    };
    fs::create_dir_all(&cfg.output_dir)?;
    let ds = load_dataset(dc)?;
    let fm = data_feature_map(cfg, &ds)?;
    let split = ds.split().expect("split_standardize attaches indices");

    let samples: Vec<Sample> = split.train.iter().map(|&i| ds.sample(i)).collect();
    let theta = fit_best_linear(cfg.family, &fm, &samples, cfg.fstar.lambda)?;

    let test_feats = map_rows(&fm, &ds, &split.test)?;
    let etas = &test_feats * &theta;
    let mus = etas.map(|e| cfg.family.mean(e));
    let ys = ds.labels_by_index(&split.test);
    let (nll, nll_se) = mean_se(&nll_vector(cfg.family, &mus, &ys)?);

    let report = BestLinearReport {
        config_hash: cfg.hash(),
        feature_dim: fm.output_dim(),
        lambda: cfg.fstar.lambda,
        theta: theta.iter().copied().collect(),
        nll,
        nll_se,
        n_train: split.train.len(),
        n_test: split.test.len(),
    };
    write_atomic(&cfg.output_dir.join("bestlinear.json"), &serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

/// Compares the excess tails of two metric logs — conventionally a step
/// size γ and its half — and reports, per predictor, the tail means, their
/// ratio, and the implied exponent `log₂(|ratio|)` of the γ-dependence.
///
/// The metric defaults to `excess_fstar` when both logs carry it, then
/// `excess_fstarstar`, then `nll`. Negative tail means for the parameter
/// average are flagged (the noise floor has been reached), as are sign
/// flips. When JSON sidecars are present next to the logs, the step sizes
/// are echoed and the logs are checked to come from the same problem.
pub fn scaling_summary(
    log_large: &Path,
    log_small: &Path,
    tail_window: usize,
    metric: Option<&str>,
) -> Result<ScalingReport> {
    if tail_window == 0 {
        return Err(Error::Config("tail_window must be >= 1".into()));
    }
    let large = read_metric_csv(log_large)?;
    let small = read_metric_csv(log_small)?;

    let metric = match metric {
        Some(m) => {
            for (name, log) in [("first", &large), ("second", &small)] {
                if !log.rows.iter().any(|r| r.metric == m) {
                    return Err(Error::Config(format!("{name} log has no {m:?} rows")));
                }
            }
            m.to_string()
        }
        None => ["excess_fstar", "excess_fstarstar", "nll"]
            .into_iter()
            .find(|m| {
                large.rows.iter().any(|r| &r.metric == m)
                    && small.rows.iter().any(|r| &r.metric == m)
            })
            .ok_or_else(|| Error::Config("logs share no excess or nll metric".into()))?
            .to_string(),
    };

    let (gamma_large, meta_large) = sidecar_gamma(log_large);
    let (gamma_small, meta_small) = sidecar_gamma(log_small);
    if let (Some(a), Some(b)) = (&meta_large, &meta_small) {
        for key in ["problem", "synth.model", "data.path", "mc.seed", "synth.seed"] {
            if a.get(key) != b.get(key) {
                return Err(Error::Config(format!(
                    "scaling logs disagree on {key:?}; they must share problem and seeds"
                )));
            }
        }
    }

    let tails_large = metric_tails(&large, &metric);
    let tails_small = metric_tails(&small, &metric);
    let mut rows = Vec::new();
    for (predictor, series_large) in &tails_large {
        let Some(series_small) = tails_small.get(predictor) else { continue };
        if tail_window > series_large.len() || tail_window > series_small.len() {
            return Err(Error::Config(format!(
                "tail_window {tail_window} exceeds the {} checkpoints available",
                series_large.len().min(series_small.len())
            )));
        }
        let a = tail_mean(series_large, tail_window);
        let b = tail_mean(series_small, tail_window);
        let ratio = a / b;
        let exponent = (a.abs() / b.abs()).log2();
        let noise_floor = predictor == PredictorKind::ParamAvg.name() && (a < 0.0 || b < 0.0);
        rows.push(ScalingRow {
            predictor: predictor.clone(),
            tail_mean_large: a,
            tail_mean_small: b,
            ratio,
            exponent,
            flagged: noise_floor || (a.signum() != b.signum()),
        });
    }
    if rows.is_empty() {
        return Err(Error::Config("logs share no predictor series to compare".into()));
    }
    Ok(ScalingReport { metric, tail_window, gamma_large, gamma_small, rows })
}

/// Reads a metric CSV written by this crate back into a [`MetricLog`].
pub fn read_metric_csv(path: &Path) -> Result<MetricLog> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["iteration", "predictor", "metric", "value", "replication", "seed"];
    if headers.iter().ne(expected) {
        return Err(Error::Config(format!(
            "{} does not look like a metric log (header {:?})",
            path.display(),
            headers
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::MalformedRow {
                line,
                detail: format!("missing field {i}"),
            })
        };
        rows.push(MetricRow {
            iteration: field(0)?.parse().map_err(|_| Error::MalformedRow {
                line,
                detail: "bad iteration".into(),
            })?,
            predictor: field(1)?.to_string(),
            metric: field(2)?.to_string(),
            value: field(3)?.parse().map_err(|_| Error::MalformedRow {
                line,
                detail: "bad value".into(),
            })?,
        });
    }
    Ok(MetricLog::new(rows))
}

// ---------------------------------------------------------------------------
// Internals
// ---------------------------------------------------------------------------

/// Immutable per-experiment state shared by all jobs.
enum Assets {
    Synth {
        /// Linear-in-x reference parameter, when a reference mode is set.
        theta_star: Option<DVector<f64>>,
        n: u64,
    },
    Data(Box<DataAssets>),
}

struct DataAssets {
    ds: Dataset,
    fm: FeatureMap,
    test_feats: DMatrix<f64>,
    test_labels: Vec<f64>,
    /// Per-test-sample NLL of the cached best-in-class reference.
    ref_nll: Option<DVector<f64>>,
    n_train: u64,
}

impl Assets {
    fn build(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.problem {
            ProblemConfig::Synth(s) => {
                let theta_star = match cfg.fstar.mode {
                    FstarMode::None => None,
                    FstarMode::ThetaTrue => Some(
                        cfg.synth_spec(0)?
                            .theta_true
                            .expect("validated: well-specified models carry theta"),
                    ),
                    FstarMode::Fit => Some(fit_synth_reference(cfg)?),
                };
                Ok(Self::Synth { theta_star, n: s.n })
            }
            ProblemConfig::Data(dc) => {
                let ds = load_dataset(dc)?;
                let fm = data_feature_map(cfg, &ds)?;
                let split = ds.split().expect("split_standardize attaches indices");
                let test_feats = map_rows(&fm, &ds, &split.test)?;
                let test_labels = ds.labels_by_index(&split.test);
                let ref_nll = match &cfg.fhatstar_path {
                    Some(path) => {
                        Some(reference_nll(cfg, path, &fm, &test_feats, &test_labels)?)
                    }
                    None => None,
                };
                let n_train = split.train.len() as u64;
                Ok(Self::Data(Box::new(DataAssets {
                    ds,
                    fm,
                    test_feats,
                    test_labels,
                    ref_nll,
                    n_train,
                })))
            }
        }
    }

    fn stream_len(&self) -> u64 {
        match self {
            Self::Synth { n, .. } => *n,
            Self::Data(a) => a.n_train,
        }
    }

    /// Seed recorded on replication-averaged rows: the base seed the
    /// per-replication stream seeds derive from.
    fn base_seed(&self, cfg: &ExperimentConfig) -> u64 {
        match &cfg.problem {
            ProblemConfig::Synth(s) => s.seed,
            ProblemConfig::Data(d) => d.order_seed,
        }
    }
}

struct JobOutcome {
    gamma: f64,
    lambda: f64,
    rep: u32,
    seed: u64,
    rows: Option<Vec<MetricRow>>,
    csv: Option<PathBuf>,
    failure: Option<String>,
}

#[derive(Serialize)]
struct RunMeta {
    config: BTreeMap<String, String>,
    config_hash: String,
    gamma: f64,
    lambda: f64,
    replication: i64,
    seed: u64,
    status: String,
    n: u64,
    checkpoints: Vec<u64>,
}

#[derive(Serialize)]
struct FailureMeta {
    replication: u32,
    message: String,
}

#[derive(Serialize)]
struct AvgMeta {
    config: BTreeMap<String, String>,
    config_hash: String,
    gamma: f64,
    lambda: f64,
    replication: i64,
    seed: u64,
    n: u64,
    checkpoints: Vec<u64>,
    reps_used: Vec<u32>,
    failures: Vec<FailureMeta>,
}

fn run_job(
    cfg: &ExperimentConfig,
    assets: &Assets,
    checkpoints: &[u64],
    config_hash: &str,
    gamma: f64,
    lambda: f64,
    rep: u32,
) -> Result<JobOutcome> {
    let seed = match &cfg.problem {
        ProblemConfig::Synth(s) => s.seed + u64::from(rep),
        ProblemConfig::Data(d) => d.order_seed + u64::from(rep),
    };
    let result = match assets {
        Assets::Synth { theta_star, n } => {
            synth_job_rows(cfg, theta_star.as_ref(), *n, checkpoints, gamma, lambda, rep)
        }
        Assets::Data(a) => data_job_rows(cfg, a, checkpoints, gamma, lambda, rep),
    };

    let stem = format!("run_g{gamma}_l{lambda}_r{rep}");
    let json_path = cfg.output_dir.join(format!("{stem}.json"));
    let mut meta = RunMeta {
        config: cfg.canonical_pairs().into_iter().collect(),
        config_hash: config_hash.to_string(),
        gamma,
        lambda,
        replication: i64::from(rep),
        seed,
        status: "ok".into(),
        n: assets.stream_len(),
        checkpoints: checkpoints.to_vec(),
    };

    match result {
        Ok(rows) => {
            let csv_path = cfg.output_dir.join(format!("{stem}.csv"));
            let mut buf = Vec::new();
            MetricLog::new(rows.clone()).write_csv(&mut buf, i64::from(rep), seed)?;
            write_atomic(&csv_path, &buf)?;
            write_atomic(&json_path, &serde_json::to_vec_pretty(&meta)?)?;
            Ok(JobOutcome {
                gamma,
                lambda,
                rep,
                seed,
                rows: Some(rows),
                csv: Some(csv_path),
                failure: None,
            })
        }
        // Divergence (including generation overflow) fails this run but not
        // the experiment; anything else is a hard error.
        Err(err @ (Error::Divergence { .. } | Error::NumericOverflow { .. })) => {
            let message = err.to_string();
            meta.status = format!("failed: {message}");
            write_atomic(&json_path, &serde_json::to_vec_pretty(&meta)?)?;
            Ok(JobOutcome {
                gamma,
                lambda,
                rep,
                seed,
                rows: None,
                csv: None,
                failure: Some(message),
            })
        }
        Err(err) => Err(err),
    }
}

fn synth_job_rows(
    cfg: &ExperimentConfig,
    theta_star: Option<&DVector<f64>>,
    n: u64,
    checkpoints: &[u64],
    gamma: f64,
    lambda: f64,
    rep: u32,
) -> Result<Vec<MetricRow>> {
    let spec = cfg.synth_spec(rep)?;
    let problem = spec.oracle_problem();
    let fm = match &cfg.features {
        FeatureConfig::Linear => FeatureMap::linear(spec.dim),
        FeatureConfig::Nystrom { kernel, sigma, m, seed } => {
            // Fresh landmarks from the input distribution, one draw per
            // replication.
            let mut rng = ChaCha8Rng::seed_from_u64(seed + u64::from(rep));
            let landmarks: Vec<DVector<f64>> = (0..*m)
                .map(|_| DVector::from_fn(spec.dim, |_, _| rng.sample(StandardNormal)))
                .collect();
            FeatureMap::nystrom(Kernel::new(*kernel, *sigma)?, landmarks)?
        }
    };

    let set = McSet::draw(&problem, cfg.mc_n, cfg.mc_seed + u64::from(rep))?;
    let eval_feats = set.features(&fm)?;
    let loss_star_star = loss_vector(cfg.family, &set, &set.etas)?;
    let loss_star = theta_star
        .map(|th| {
            let etas = DVector::from_iterator(set.len(), set.xs.iter().map(|x| th.dot(x)));
            loss_vector(cfg.family, &set, &etas)
        })
        .transpose()?;

    let sgd = SgdConfig {
        gamma,
        lambda,
        theta0: None,
        store_history: cfg.predictors.contains(&PredictorKind::PredAvgExact),
        history_stride: cfg.history_stride,
        burnin: cfg.burnin,
    };
    let (_, rows) = train_stream(&sgd, cfg.family, &fm, spec.stream(n), checkpoints, |state| {
        let mut out = Vec::new();
        for &kind in &cfg.predictors {
            let pred = Predictor::new(kind, cfg.family, &fm, state)?;
            let etas = pred.natural_batch(&eval_feats)?;
            let losses = loss_vector(cfg.family, &set, &etas)?;
            let (v, se) = mean_se(&(&losses - &loss_star_star));
            push_metric(&mut out, state.n(), kind, "excess_fstarstar", v, se);
            if let Some(ls) = &loss_star {
                let (v, se) = mean_se(&(&losses - ls));
                push_metric(&mut out, state.n(), kind, "excess_fstar", v, se);
            }
        }
        Ok(out)
    })?;
    Ok(rows)
}

fn data_job_rows(
    cfg: &ExperimentConfig,
    assets: &DataAssets,
    checkpoints: &[u64],
    gamma: f64,
    lambda: f64,
    rep: u32,
) -> Result<Vec<MetricRow>> {
    let ProblemConfig::Data(dc) = &cfg.problem else {
        return Err(Error::Config("not a dataset problem".into()));
    };
    let split = assets.ds.split().expect("split attached");
    let mut order = split.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(dc.order_seed + u64::from(rep));
    order.shuffle(&mut rng);

    let sgd = SgdConfig {
        gamma,
        lambda,
        theta0: None,
        store_history: cfg.predictors.contains(&PredictorKind::PredAvgExact),
        history_stride: cfg.history_stride,
        burnin: cfg.burnin,
    };
    let (_, rows) = train_stream(
        &sgd,
        cfg.family,
        &assets.fm,
        assets.ds.samples_by_index(&order),
        checkpoints,
        |state| {
            let mut out = Vec::new();
            for &kind in &cfg.predictors {
                let pred = Predictor::new(kind, cfg.family, &assets.fm, state)?;
                let mus = pred.moment_batch(&assets.test_feats)?;
                let nlls = nll_vector(cfg.family, &mus, &assets.test_labels)?;
                let (v, se) = mean_se(&nlls);
                push_metric(&mut out, state.n(), kind, "nll", v, se);
                if let Some(ref_nll) = &assets.ref_nll {
                    let (v, se) = mean_se(&(&nlls - ref_nll));
                    push_metric(&mut out, state.n(), kind, "excess_fhatstar", v, se);
                }
            }
            Ok(out)
        },
    )?;
    Ok(rows)
}

fn push_metric(
    out: &mut Vec<MetricRow>,
    iteration: u64,
    kind: PredictorKind,
    metric: &str,
    value: f64,
    se: f64,
) {
    out.push(MetricRow {
        iteration,
        predictor: kind.name().to_string(),
        metric: metric.to_string(),
        value,
    });
    out.push(MetricRow {
        iteration,
        predictor: kind.name().to_string(),
        metric: format!("{metric}_se"),
        value: se,
    });
}

/// Fits the linear-in-x reference parameter once per experiment, on a
/// dedicated Monte-Carlo set labeled with the true conditional means.
fn fit_synth_reference(cfg: &ExperimentConfig) -> Result<DVector<f64>> {
    let spec = cfg.synth_spec(0)?;
    let problem = spec.oracle_problem();
    let set = McSet::draw(&problem, cfg.fstar.n, cfg.fstar.seed)?;
    let samples: Vec<Sample> = set
        .xs
        .iter()
        .zip(set.mu.iter())
        .map(|(x, &mu)| Sample { x: x.clone(), y: mu })
        .collect();
    fit_best_linear(cfg.family, &FeatureMap::linear(problem.dim), &samples, cfg.fstar.lambda)
}

/// Loads the dataset, preferring the binary cache when configured and
/// present; populates the cache after a cold load.
fn load_dataset(dc: &DataConfig) -> Result<Dataset> {
    if let Some(cache) = &dc.cache {
        if cache.exists() {
            return data::read_cache(cache);
        }
    }
    let raw = data::load_csv(&dc.path, dc.label_column, &dc.positive_label, dc.delimiter)?;
    let split = data::split_standardize(raw, dc.test_fraction, dc.split_seed)?;
    if let Some(cache) = &dc.cache {
        data::write_cache(&split, cache)?;
    }
    Ok(split)
}

/// The feature map for a dataset problem. Nyström landmarks subsample the
/// train split once, with the configured seed.
fn data_feature_map(cfg: &ExperimentConfig, ds: &Dataset) -> Result<FeatureMap> {
    match &cfg.features {
        FeatureConfig::Linear => Ok(FeatureMap::linear(ds.dim())),
        FeatureConfig::Nystrom { kernel, sigma, m, seed } => {
            let split = ds.split().expect("split attached");
            if *m > split.train.len() {
                return Err(Error::Config(format!(
                    "nystrom.m = {m} exceeds the {} train rows",
                    split.train.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let picks = rand::seq::index::sample(&mut rng, split.train.len(), *m);
            let landmarks: Vec<DVector<f64>> =
                picks.iter().map(|k| ds.sample(split.train[k]).x).collect();
            FeatureMap::nystrom(Kernel::new(*kernel, *sigma)?, landmarks)
        }
    }
}

fn map_rows(fm: &FeatureMap, ds: &Dataset, idx: &[usize]) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(idx.len(), fm.output_dim());
    for (r, &i) in idx.iter().enumerate() {
        let phi = fm.map(&ds.sample(i).x)?;
        out.row_mut(r).tr_copy_from(&phi);
    }
    Ok(out)
}

/// Loads a [`BestLinearReport`] and evaluates its parameter on the test
/// split, giving the per-sample reference NLLs for paired excess rows.
fn reference_nll(
    cfg: &ExperimentConfig,
    path: &Path,
    fm: &FeatureMap,
    test_feats: &DMatrix<f64>,
    test_labels: &[f64],
) -> Result<DVector<f64>> {
    let report: BestLinearReport = serde_json::from_slice(&fs::read(path)?)?;
    if report.feature_dim != fm.output_dim() {
        return Err(Error::Config(format!(
            "fhatstar reference was fitted in dimension {}, but this run's features have \
             dimension {} — rerun `bestlinear` with this config's feature settings",
            report.feature_dim,
            fm.output_dim()
        )));
    }
    let theta = DVector::from_vec(report.theta);
    let etas = test_feats * &theta;
    let mus = etas.map(|e| cfg.family.mean(e));
    nll_vector(cfg.family, &mus, test_labels)
}

/// Positionally combines aligned replication logs: plain mean for value
/// rows; √(Σ se²)/R for `*_se` rows (the standard error of the mean of
/// independent estimates).
fn combine_replications(done: &[&JobOutcome]) -> Result<Vec<MetricRow>> {
    let first = done[0].rows.as_ref().expect("done runs carry rows");
    for other in &done[1..] {
        let rows = other.rows.as_ref().expect("done runs carry rows");
        let aligned = rows.len() == first.len()
            && rows.iter().zip(first.iter()).all(|(a, b)| {
                a.iteration == b.iteration && a.predictor == b.predictor && a.metric == b.metric
            });
        if !aligned {
            return Err(Error::Config(
                "replication logs are not aligned; cannot average".into(),
            ));
        }
    }
    let r = done.len() as f64;
    Ok(first
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let values = done.iter().map(|o| o.rows.as_ref().expect("done")[i].value);
            let value = if row.metric.ends_with("_se") {
                values.map(|v| v * v).sum::<f64>().sqrt() / r
            } else {
                values.sum::<f64>() / r
            };
            MetricRow { value, ..row.clone() }
        })
        .collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Pulls `gamma` (and the config echo) from a log's JSON sidecar, if any.
fn sidecar_gamma(log: &Path) -> (Option<f64>, Option<BTreeMap<String, String>>) {
    let sidecar = log.with_extension("json");
    let Ok(bytes) = fs::read(&sidecar) else { return (None, None) };
    let Ok(value) = serde_json::from_slice::<serde_json::Value>(&bytes) else {
        return (None, None);
    };
    let gamma = value.get("gamma").and_then(|g| g.as_f64());
    let config = value.get("config").and_then(|c| {
        c.as_object().map(|map| {
            map.iter()
                .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                .collect()
        })
    });
    (gamma, config)
}

/// Per-predictor series of `metric` values, ordered by iteration.
fn metric_tails(log: &MetricLog, metric: &str) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    for row in &log.rows {
        if row.metric == metric {
            out.entry(row.predictor.clone()).or_default().push((row.iteration, row.value));
        }
    }
    out.into_iter()
        .map(|(k, mut v)| {
            v.sort_by_key(|&(it, _)| it);
            (k, v.into_iter().map(|(_, val)| val).collect())
        })
        .collect()
}

fn tail_mean(series: &[f64], window: usize) -> f64 {
    let tail = &series[series.len() - window..];
    tail.iter().sum::<f64>() / window as f64
}
