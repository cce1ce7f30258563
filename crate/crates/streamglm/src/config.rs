//! Experiment configuration: a flat `key = value` text format with dotted
//! keys, strict validation, and a canonical echo used both for JSON metadata
//! and for the config hash that makes every output row attributable.
//!
//! Unknown or duplicate keys are errors (they are almost always typos), and
//! every effective setting — including defaults — appears in the canonical
//! echo, so two configs hash alike exactly when they run alike.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use sha2::{Digest, Sha256};

use crate::data::LabelColumn;
use crate::error::{Error, Result};
use crate::family::LinkFamily;
use crate::features::{Kernel, KernelKind};
use crate::predictor::PredictorKind;
use crate::synth::{SynthModel, SynthSpec};

/// What the training stream is drawn from.
#[derive(Debug, Clone)]
pub enum ProblemConfig {
    Synth(SynthConfig),
    Data(DataConfig),
}

/// A synthetic problem: model, optional true parameter (well-specified
/// models only), stream length per replication, and the base stream seed
/// (replication `r` streams with `seed + r`).
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub model: SynthModel,
    pub theta: Option<DVector<f64>>,
    pub n: u64,
    pub seed: u64,
}

/// A real dataset: CSV location and parsing options, split protocol, an
/// optional binary cache path, and the base seed for the per-replication
/// shuffle of the train order (`order_seed + r`).
#[derive(Debug, Clone)]
pub struct DataConfig {
    pub path: PathBuf,
    pub label_column: LabelColumn,
    pub positive_label: String,
    pub delimiter: u8,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub cache: Option<PathBuf>,
    pub order_seed: u64,
}

/// Feature map selection. Nyström landmarks are seeded: synthetic problems
/// redraw them per replication (`seed + r`) from the input distribution,
/// real datasets subsample the train split once with `seed`.
#[derive(Debug, Clone)]
pub enum FeatureConfig {
    Linear,
    Nystrom { kernel: KernelKind, sigma: f64, m: usize, seed: u64 },
}

/// How the best-in-class reference η* is obtained for synthetic runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FstarMode {
    /// No η* reference; only excess over the Bayes risk is reported.
    None,
    /// Use the generating parameter (well-specified models).
    ThetaTrue,
    /// Fit the best linear parameter once per experiment on a dedicated
    /// Monte-Carlo set labeled with the true conditional means.
    Fit,
}

impl FstarMode {
    fn from_name(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(Self::None),
            "theta_true" => Ok(Self::ThetaTrue),
            "fit" => Ok(Self::Fit),
            other => Err(Error::Config(format!(
                "unknown fstar.mode {other:?} (expected none, theta_true, or fit)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ThetaTrue => "theta_true",
            Self::Fit => "fit",
        }
    }
}

/// Reference-fit settings: mode, ridge strength, and the size/seed of the
/// fitting set (used when `mode = fit`).
#[derive(Debug, Clone)]
pub struct FstarConfig {
    pub mode: FstarMode,
    pub lambda: f64,
    pub n: usize,
    pub seed: u64,
}

/// A fully validated experiment description. See the crate README for the
/// complete key reference; [`ExperimentConfig::parse_str`] documents the
/// grammar.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub family: LinkFamily,
    pub features: FeatureConfig,
    /// Step sizes to sweep; each (γ, λ, replication) triple is one run.
    pub gammas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub burnin: u64,
    pub predictors: Vec<PredictorKind>,
    pub history_stride: u64,
    /// Number of log-spaced evaluation checkpoints between 10 and n.
    pub checkpoint_count: usize,
    /// Monte-Carlo evaluation draws per replication (seeded `mc_seed + r`).
    pub mc_n: usize,
    pub mc_seed: u64,
    pub fstar: FstarConfig,
    /// Reference file from a `bestlinear` run; enables excess-over-𝓕̂* rows
    /// for dataset problems.
    pub fhatstar_path: Option<PathBuf>,
    pub replications: u32,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads and parses a config file; see [`ExperimentConfig::parse_str`].
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Parses the flat config format: one `key = value` per line, `#`
    /// comments and blank lines ignored, keys dotted by module
    /// (`synth.model`, `nystrom.sigma`, …). Unknown keys, duplicate keys,
    /// and inconsistent settings are all hard errors.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut bag = KeyBag::new(text)?;
        let cfg = Self::from_bag(&mut bag)?;
        bag.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_bag(bag: &mut KeyBag) -> Result<Self> {
        let family = match bag.take("family") {
            Some(name) => LinkFamily::from_name(&name)?,
            None => LinkFamily::Logistic,
        };

        let problem = match bag.require("problem")?.as_str() {
            "synth" => {
                let model = SynthModel::from_name(&bag.require("synth.model")?)?;
                let theta = bag.take("synth.theta").map(|s| parse_f64_list(&s, "synth.theta")).transpose()?;
                ProblemConfig::Synth(SynthConfig {
                    model,
                    theta: theta.map(DVector::from_vec),
                    n: bag.parse_req("synth.n")?,
                    seed: bag.parse_or("synth.seed", 1u64)?,
                })
            }
            "data" => {
                let label_column = match bag.take("data.label_column").as_deref() {
                    None | Some("last") => LabelColumn::Last,
                    Some(s) => LabelColumn::Index(s.parse().map_err(|_| {
                        Error::Config(format!("data.label_column must be `last` or an index, got {s:?}"))
                    })?),
                };
                let delimiter = match bag.take("data.delimiter").as_deref() {
                    None => b',',
                    Some("tab") | Some("\\t") => b'\t',
                    Some(s) if s.len() == 1 => s.as_bytes()[0],
                    Some(s) => {
                        return Err(Error::Config(format!(
                            "data.delimiter must be a single character or `tab`, got {s:?}"
                        )))
                    }
                };
                ProblemConfig::Data(DataConfig {
                    path: PathBuf::from(bag.require("data.path")?),
                    label_column,
                    positive_label: bag.require("data.positive_label")?,
                    delimiter,
                    test_fraction: bag.parse_or("data.test_fraction", 0.2f64)?,
                    split_seed: bag.parse_or("data.split_seed", 0u64)?,
                    cache: bag.take("data.cache").map(PathBuf::from),
                    order_seed: bag.parse_or("data.order_seed", 1u64)?,
                })
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown problem {other:?} (expected synth or data)"
                )))
            }
        };

        let features = match bag.take("features").as_deref() {
            None | Some("linear") => FeatureConfig::Linear,
            Some("nystrom") => FeatureConfig::Nystrom {
                kernel: KernelKind::from_name(&bag.require("nystrom.kernel")?)?,
                sigma: bag.parse_req("nystrom.sigma")?,
                m: bag.parse_req("nystrom.m")?,
                seed: bag.parse_or("nystrom.seed", 0u64)?,
            },
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown features {other:?} (expected linear or nystrom)"
                )))
            }
        };

        let predictors = match bag.take("predictors") {
            Some(s) => s
                .split(',')
                .map(|p| PredictorKind::from_name(p.trim()))
                .collect::<Result<Vec<_>>>()?,
            None => vec![PredictorKind::Last, PredictorKind::ParamAvg, PredictorKind::PredAvgTaylor],
        };

        let default_fstar = match &problem {
            ProblemConfig::Synth(s) => match s.model {
                SynthModel::WellSpecLinear | SynthModel::WellSpecPoisson => FstarMode::ThetaTrue,
                SynthModel::SinSum | SynthModel::Cube => FstarMode::Fit,
                SynthModel::KernelRatio => FstarMode::None,
            },
            ProblemConfig::Data(_) => FstarMode::None,
        };
        let mc_n = bag.parse_or("mc.n", 20_000usize)?;
        let fstar = FstarConfig {
            mode: match bag.take("fstar.mode") {
                Some(s) => FstarMode::from_name(&s)?,
                None => default_fstar,
            },
            lambda: bag.parse_or("fstar.lambda", 0.0f64)?,
            n: bag.parse_or("fstar.n", mc_n)?,
            seed: bag.parse_or("fstar.seed", 7_777u64)?,
        };

        Ok(Self {
            problem,
            family,
            features,
            gammas: parse_f64_list(&bag.require("gammas")?, "gammas")?,
            lambdas: match bag.take("lambdas") {
                Some(s) => parse_f64_list(&s, "lambdas")?,
                None => vec![0.0],
            },
            burnin: bag.parse_or("burnin", 0u64)?,
            predictors,
            history_stride: bag.parse_or("history.stride", 1u64)?,
            checkpoint_count: bag.parse_or("checkpoints.count", 30usize)?,
            mc_n,
            mc_seed: bag.parse_or("mc.seed", 1_000u64)?,
            fstar,
            fhatstar_path: bag.take("fhatstar.path").map(PathBuf::from),
            replications: bag.parse_or("replications", 1u32)?,
            output_dir: PathBuf::from(bag.require("output.dir")?),
        })
    }

    fn validate(&self) -> Result<()> {
        fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(Error::Config(msg.into()))
            }
        }

        ensure(!self.gammas.is_empty(), "at least one gamma is required")?;
        for &g in &self.gammas {
            ensure(g.is_finite() && g >= 0.0, format!("gammas must be finite and >= 0, got {g}"))?;
        }
        ensure(!self.lambdas.is_empty(), "at least one lambda is required")?;
        for &l in &self.lambdas {
            ensure(l.is_finite() && l >= 0.0, format!("lambdas must be finite and >= 0, got {l}"))?;
        }
        ensure(self.replications >= 1, "replications must be >= 1")?;
        ensure(self.mc_n >= 2, "mc.n must be >= 2 to estimate standard errors")?;
        ensure(self.checkpoint_count >= 1, "checkpoints.count must be >= 1")?;
        ensure(self.history_stride >= 1, "history.stride must be >= 1")?;
        ensure(!self.predictors.is_empty(), "at least one predictor is required")?;
        for (i, a) in self.predictors.iter().enumerate() {
            ensure(
                !self.predictors[..i].contains(a),
                format!("duplicate predictor {:?}", a.name()),
            )?;
        }

        match &self.problem {
            ProblemConfig::Synth(s) => {
                ensure(s.n >= 1, "synth.n must be >= 1")?;
                ensure(self.burnin < s.n, "burnin must be smaller than synth.n")?;
                // Delegate model/family/theta consistency to the synthetic
                // module's own validation.
                self.synth_spec(0)?;
                ensure(
                    self.fstar.mode != FstarMode::Fit || matches!(self.features, FeatureConfig::Linear),
                    "fstar.mode = fit is supported for linear features; use fstar.mode = none for kernel runs",
                )?;
                if self.fstar.mode == FstarMode::Fit {
                    ensure(self.fstar.n >= 2, "fstar.n must be >= 2")?;
                }
            }
            ProblemConfig::Data(d) => {
                ensure(
                    self.family == LinkFamily::Logistic,
                    "dataset problems are binary classification; set family = logistic",
                )?;
                ensure(
                    d.test_fraction > 0.0 && d.test_fraction < 1.0,
                    format!("data.test_fraction must be in (0, 1), got {}", d.test_fraction),
                )?;
                ensure(!d.positive_label.is_empty(), "data.positive_label must be non-empty")?;
                ensure(
                    self.fstar.mode == FstarMode::None,
                    "dataset problems use fhatstar.path (from `bestlinear`) instead of fstar.mode",
                )?;
            }
        }

        if let FeatureConfig::Nystrom { sigma, m, kernel, .. } = &self.features {
            // Kernel constructor enforces sigma > 0 and finiteness.
            Kernel::new(*kernel, *sigma)?;
            ensure(*m >= 1, "nystrom.m must be >= 1")?;
        }
        Ok(())
    }

    /// The validated [`SynthSpec`] for replication `rep` (stream seed
    /// `synth.seed + rep`). Errors for dataset problems.
    pub fn synth_spec(&self, rep: u32) -> Result<SynthSpec> {
        let ProblemConfig::Synth(s) = &self.problem else {
            return Err(Error::Config("not a synthetic problem".into()));
        };
        let seed = s.seed + u64::from(rep);
        match s.model {
            SynthModel::WellSpecLinear | SynthModel::WellSpecPoisson => {
                let theta = s.theta.clone().ok_or_else(|| {
                    Error::Config("well-specified models require synth.theta".into())
                })?;
                if s.model == SynthModel::WellSpecPoisson && self.family != LinkFamily::Poisson {
                    return Err(Error::Config(
                        "synth.model = wellspec_poisson requires family = poisson".into(),
                    ));
                }
                if s.model == SynthModel::WellSpecLinear && self.family == LinkFamily::Poisson {
                    return Err(Error::Config(
                        "use synth.model = wellspec_poisson for the Poisson family".into(),
                    ));
                }
                SynthSpec::wellspec(self.family, theta, seed)
            }
            model => {
                if s.theta.is_some() {
                    return Err(Error::Config(format!(
                        "synth.theta only applies to well-specified models, not {}",
                        model.name()
                    )));
                }
                if self.family != LinkFamily::Logistic {
                    return Err(Error::Config(format!(
                        "synth.model = {} is a logistic model; set family = logistic",
                        model.name()
                    )));
                }
                SynthSpec::new(model, seed)
            }
        }
    }

    /// Every effective setting as sorted `(key, value)` pairs — including
    /// defaulted values — used for the JSON echo and the config hash.
    pub fn canonical_pairs(&self) -> Vec<(String, String)> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };

        put("family", self.family.name().to_string());
        match &self.problem {
            ProblemConfig::Synth(s) => {
                put("problem", "synth".into());
                put("synth.model", s.model.name().to_string());
                if let Some(theta) = &s.theta {
                    put("synth.theta", join_f64(theta.iter().copied()));
                }
                put("synth.n", s.n.to_string());
                put("synth.seed", s.seed.to_string());
            }
            ProblemConfig::Data(d) => {
                put("problem", "data".into());
                put("data.path", d.path.display().to_string());
                put(
                    "data.label_column",
                    match d.label_column {
                        LabelColumn::Last => "last".to_string(),
                        LabelColumn::Index(i) => i.to_string(),
                    },
                );
                put("data.positive_label", d.positive_label.clone());
                put(
                    "data.delimiter",
                    if d.delimiter == b'\t' {
                        "tab".to_string()
                    } else {
                        (d.delimiter as char).to_string()
                    },
                );
                put("data.test_fraction", d.test_fraction.to_string());
                put("data.split_seed", d.split_seed.to_string());
                if let Some(cache) = &d.cache {
                    put("data.cache", cache.display().to_string());
                }
                put("data.order_seed", d.order_seed.to_string());
            }
        }
        match &self.features {
            FeatureConfig::Linear => put("features", "linear".into()),
            FeatureConfig::Nystrom { kernel, sigma, m, seed } => {
                put("features", "nystrom".into());
                put("nystrom.kernel", kernel.name().to_string());
                put("nystrom.sigma", sigma.to_string());
                put("nystrom.m", m.to_string());
                put("nystrom.seed", seed.to_string());
            }
        }
        put("gammas", join_f64(self.gammas.iter().copied()));
        put("lambdas", join_f64(self.lambdas.iter().copied()));
        put("burnin", self.burnin.to_string());
        put(
            "predictors",
            self.predictors.iter().map(|p| p.name()).collect::<Vec<_>>().join(","),
        );
        put("history.stride", self.history_stride.to_string());
        put("checkpoints.count", self.checkpoint_count.to_string());
        put("mc.n", self.mc_n.to_string());
        put("mc.seed", self.mc_seed.to_string());
        put("fstar.mode", self.fstar.mode.name().to_string());
        put("fstar.lambda", self.fstar.lambda.to_string());
        put("fstar.n", self.fstar.n.to_string());
        put("fstar.seed", self.fstar.seed.to_string());
        if let Some(p) = &self.fhatstar_path {
            put("fhatstar.path", p.display().to_string());
        }
        put("replications", self.replications.to_string());
        put("output.dir", self.output_dir.display().to_string());

        map.into_iter().collect()
    }

    /// SHA-256 of the canonical `key=value` listing, in lowercase hex.
    /// `output.dir` is excluded: it states where results are written, not
    /// what the experiment is, and reruns of one experiment into different
    /// directories must agree on their identity.
    pub fn hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in self.canonical_pairs() {
            if k == "output.dir" {
                continue;
            }
            let _ = writeln!(text, "{k}={v}");
        }
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }
}

/// Key/value store for one config file; tracks consumption so leftovers can
/// be reported as unknown keys.
struct KeyBag {
    map: BTreeMap<String, String>,
}

impl KeyBag {
    fn new(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {line:?}", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.take(key).ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    fn parse_req<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| Error::Config(format!("cannot parse {key} = {raw:?}")))
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            Some(raw) => {
                raw.parse().map_err(|_| Error::Config(format!("cannot parse {key} = {raw:?}")))
            }
            None => Ok(default),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.map.keys().next() {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        Ok(())
    }
}

fn parse_f64_list(raw: &str, key: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse {key} entry {s:?} as a number")))
        })
        .collect()
}

fn join_f64(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
