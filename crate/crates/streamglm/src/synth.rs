//! Seeded synthetic data generators: the two mis-specified logistic models
//! (sums of sines, sums of cubes), the kernel-ratio model, and well-specified
//! linear generators for any family. Streams are lazy so million-sample runs
//! need constant memory.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::eval::OracleProblem;
use crate::family::{LinkFamily, Sample};

/// Natural parameters above this make the Poisson rate e^η too extreme to
/// sample sensibly; generation aborts instead of silently saturating.
pub const POISSON_ETA_MAX_SYNTH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthModel {
    /// η**(x) = sin x₁ + sin x₂, logistic labels.
    SinSum,
    /// η**(x) = x₁³ + x₂³, logistic labels.
    Cube,
    /// η**(x) = 5 / (5 + x^⊤x), logistic labels.
    KernelRatio,
    /// η**(x) = θ_true^⊤x with labels drawn from the configured family.
    WellSpecLinear,
    /// η**(x) = θ_true^⊤x with Poisson counts.
    WellSpecPoisson,
}

impl SynthModel {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sin_sum" => Ok(Self::SinSum),
            "cube" => Ok(Self::Cube),
            "kernel_ratio" => Ok(Self::KernelRatio),
            "wellspec_linear" => Ok(Self::WellSpecLinear),
            "wellspec_poisson" => Ok(Self::WellSpecPoisson),
            other => Err(Error::Config(format!(
                "unknown synthetic model '{other}' (expected sin_sum | cube | kernel_ratio | wellspec_linear | wellspec_poisson)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SinSum => "sin_sum",
            Self::Cube => "cube",
            Self::KernelRatio => "kernel_ratio",
            Self::WellSpecLinear => "wellspec_linear",
            Self::WellSpecPoisson => "wellspec_poisson",
        }
    }
}

/// A synthetic experiment: model, input dimension, optional true parameter
/// (well-specified cases), label family, and stream seed. Inputs are always
/// standard normal in the stated dimension.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub model: SynthModel,
    pub dim: usize,
    /// Family of the labels. Fixed to Logistic for the three nonlinear
    /// models and to Poisson for WellSpecPoisson; free for WellSpecLinear.
    pub fam: LinkFamily,
    pub theta_true: Option<DVector<f64>>,
    pub seed: u64,
}

impl SynthSpec {
    /// Defaults: d=2 for SinSum/Cube, d=5 for KernelRatio, logistic labels.
    /// Well-specified models need [`wellspec`](Self::wellspec) instead, since
    /// they are meaningless without θ_true.
    pub fn new(model: SynthModel, seed: u64) -> Result<Self> {
        let dim = match model {
            SynthModel::SinSum | SynthModel::Cube => 2,
            SynthModel::KernelRatio => 5,
            SynthModel::WellSpecLinear | SynthModel::WellSpecPoisson => {
                return Err(Error::Config(
                    "well-specified models need theta_true; use SynthSpec::wellspec".into(),
                ))
            }
        };
        Ok(Self { model, dim, fam: LinkFamily::Logistic, theta_true: None, seed })
    }

    pub fn wellspec(fam: LinkFamily, theta_true: DVector<f64>, seed: u64) -> Result<Self> {
        let model = match fam {
            LinkFamily::Poisson => SynthModel::WellSpecPoisson,
            _ => SynthModel::WellSpecLinear,
        };
        let spec = Self { model, dim: theta_true.len(), fam, theta_true: Some(theta_true), seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.model {
            SynthModel::SinSum | SynthModel::Cube => {
                if self.dim < 2 {
                    return Err(Error::Config(format!(
                        "{} needs dimension >= 2, got {}",
                        self.model.name(),
                        self.dim
                    )));
                }
                if self.fam != LinkFamily::Logistic {
                    return Err(Error::Config(format!(
                        "{} generates logistic labels",
                        self.model.name()
                    )));
                }
            }
            SynthModel::KernelRatio => {
                if self.dim == 0 {
                    return Err(Error::Config("kernel_ratio needs dimension >= 1".into()));
                }
                if self.fam != LinkFamily::Logistic {
                    return Err(Error::Config("kernel_ratio generates logistic labels".into()));
                }
            }
            SynthModel::WellSpecLinear | SynthModel::WellSpecPoisson => {
                let theta = self.theta_true.as_ref().ok_or_else(|| {
                    Error::Config("well-specified models need synth.theta".into())
                })?;
                if theta.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: theta.len(),
                    });
                }
                if !theta.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("theta_true".into()));
                }
                if self.model == SynthModel::WellSpecPoisson && self.fam != LinkFamily::Poisson {
                    return Err(Error::Config("wellspec_poisson implies the poisson family".into()));
                }
            }
        }
        Ok(())
    }

    /// η**(x) for this model.
    pub fn eta_star_star(&self, x: &DVector<f64>) -> f64 {
        eta_value(self.model, self.theta_true.as_ref(), x)
    }

    /// The paired oracle problem (same η**, same family, same inputs law).
    pub fn oracle_problem(&self) -> OracleProblem {
        let model = self.model;
        let theta = self.theta_true.clone();
        OracleProblem::new(self.fam, self.dim, move |x| eta_value(model, theta.as_ref(), x))
    }

    /// Lazy sample stream of length `n`.
    pub fn stream(&self, n: u64) -> SynthStream {
        SynthStream {
            spec: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            remaining: n,
        }
    }
}

fn eta_value(model: SynthModel, theta: Option<&DVector<f64>>, x: &DVector<f64>) -> f64 {
    match model {
        SynthModel::SinSum => x[0].sin() + x[1].sin(),
        SynthModel::Cube => x[0].powi(3) + x[1].powi(3),
        SynthModel::KernelRatio => 5.0 / (5.0 + x.norm_squared()),
        SynthModel::WellSpecLinear | SynthModel::WellSpecPoisson => {
            theta.expect("validated spec carries theta_true").dot(x)
        }
    }
}

/// Lazy, seeded synthetic sample stream.
#[derive(Debug, Clone)]
pub struct SynthStream {
    spec: SynthSpec,
    rng: ChaCha8Rng,
    remaining: u64,
}

impl Iterator for SynthStream {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let x = DVector::from_fn(self.spec.dim, |_, _| {
            self.rng.sample::<f64, _>(StandardNormal)
        });
        let eta = self.spec.eta_star_star(&x);
        let y = match self.spec.fam {
            LinkFamily::Logistic => {
                let mu = self.spec.fam.mean(eta);
                f64::from(self.rng.random::<f64>() < mu)
            }
            LinkFamily::Poisson => {
                if eta > POISSON_ETA_MAX_SYNTH {
                    return Some(Err(Error::NumericOverflow {
                        context: "poisson synthetic rate".into(),
                        eta,
                    }));
                }
                match Poisson::new(eta.exp()) {
                    Ok(pois) => self.rng.sample(pois),
                    Err(e) => {
                        return Some(Err(Error::Config(format!(
                            "poisson rate {} invalid: {e}",
                            eta.exp()
                        ))))
                    }
                }
            }
            LinkFamily::Gaussian => eta + self.rng.sample::<f64, _>(StandardNormal),
        };
        Some(Ok(Sample::new(x, y)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

/// Draws the sample stream together with its oracle problem.
pub fn draw(spec: &SynthSpec, n: u64) -> (SynthStream, OracleProblem) {
    (spec.stream(n), spec.oracle_problem())
}

/// Well-specified generator: η**(x) = theta_true^⊤x with labels drawn from
/// `fam` at that natural parameter.
pub fn draw_wellspecified(
    fam: LinkFamily,
    theta_true: DVector<f64>,
    n: u64,
    seed: u64,
) -> Result<(SynthStream, OracleProblem)> {
    let spec = SynthSpec::wellspec(fam, theta_true, seed)?;
    Ok(draw(&spec, n))
}
