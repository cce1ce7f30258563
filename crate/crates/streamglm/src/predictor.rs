//! The four prediction rules built from a trained state: last iterate,
//! parameter averaging, exact prediction averaging over the iterate history,
//! and the Taylor-corrected prediction average.
//!
//! All predictors report on the moment scale (a probability for logistic, a
//! rate for Poisson, the mean for Gaussian). Risk evaluation needs the
//! natural scale; `natural_*` methods use the native linear score for Last
//! and ParamAvg and the inverse link for the two moment-averaging rules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::{self, LinkFamily};
use crate::features::FeatureMap;
use crate::trainer::TrainerState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Last,
    ParamAvg,
    PredAvgExact,
    PredAvgTaylor,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 4] =
        [Self::Last, Self::ParamAvg, Self::PredAvgExact, Self::PredAvgTaylor];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "last" => Ok(Self::Last),
            "param_avg" => Ok(Self::ParamAvg),
            "pred_avg_exact" => Ok(Self::PredAvgExact),
            "pred_avg_taylor" => Ok(Self::PredAvgTaylor),
            other => Err(Error::Config(format!(
                "unknown predictor '{other}' (expected last | param_avg | pred_avg_exact | pred_avg_taylor)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Last => "last",
            Self::ParamAvg => "param_avg",
            Self::PredAvgExact => "pred_avg_exact",
            Self::PredAvgTaylor => "pred_avg_taylor",
        }
    }
}

/// Immutable snapshot predictor; cheap to build at a checkpoint and safe to
/// evaluate concurrently at distinct points.
pub struct Predictor<'a> {
    pub kind: PredictorKind,
    pub fam: LinkFamily,
    fm: &'a FeatureMap,
    state: &'a TrainerState,
    mean: DVector<f64>,
    cov: Option<DMatrix<f64>>,
}

impl<'a> Predictor<'a> {
    pub fn new(
        kind: PredictorKind,
        fam: LinkFamily,
        fm: &'a FeatureMap,
        state: &'a TrainerState,
    ) -> Result<Self> {
        if kind == PredictorKind::PredAvgExact && state.history().is_empty() {
            return Err(Error::EmptyHistory);
        }
        let cov = (kind == PredictorKind::PredAvgTaylor).then(|| state.cov());
        Ok(Self { kind, fam, fm, state, mean: state.mean(), cov })
    }

    /// Moment-scale prediction at a raw input.
    pub fn predict(&self, x: &DVector<f64>) -> Result<f64> {
        let phi = self.fm.map(x)?;
        self.predict_mapped(&phi)
    }

    /// Moment-scale prediction at an already-mapped feature vector.
    pub fn predict_mapped(&self, phi: &DVector<f64>) -> Result<f64> {
        match self.kind {
            PredictorKind::Last => self.mean_of_eta(self.state.theta().dot(phi)),
            PredictorKind::ParamAvg => self.mean_of_eta(self.mean.dot(phi)),
            PredictorKind::PredAvgExact => {
                // Kahan-compensated mean of a′(θ_i^⊤φ) over the history.
                let mut sum = 0.0f64;
                let mut comp = 0.0f64;
                for th in self.state.history() {
                    let mu = self.mean_of_eta(th.dot(phi))?;
                    let y = mu - comp;
                    let t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                }
                Ok(sum / self.state.history().len() as f64)
            }
            PredictorKind::PredAvgTaylor => {
                let eta_bar = self.mean.dot(phi);
                family::check_eta(self.fam, eta_bar, "taylor prediction")?;
                let cov = self.cov.as_ref().expect("taylor predictor carries cov");
                let quad = (cov * phi).dot(phi);
                let raw = self.fam.mean(eta_bar) + 0.5 * quad * self.fam.third(eta_bar);
                if !raw.is_finite() {
                    return Err(Error::NonFinite("taylor-corrected prediction".into()));
                }
                Ok(self.fam.clamp_moment(raw))
            }
        }
    }

    /// Natural-scale prediction at an already-mapped feature vector. Last and
    /// ParamAvg are natively linear scores; the averaged-moment rules go
    /// through the inverse link of the (clamped) moment prediction.
    pub fn natural_mapped(&self, phi: &DVector<f64>) -> Result<f64> {
        match self.kind {
            PredictorKind::Last => Ok(self.state.theta().dot(phi)),
            PredictorKind::ParamAvg => Ok(self.mean.dot(phi)),
            PredictorKind::PredAvgExact | PredictorKind::PredAvgTaylor => {
                let mu = self.predict_mapped(phi)?;
                Ok(self.fam.natural_from_moment(self.fam.clamp_moment(mu)))
            }
        }
    }

    /// Moment-scale predictions for a batch of points, one per row of `feats`.
    pub fn moment_batch(&self, feats: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_width(feats)?;
        match self.kind {
            PredictorKind::Last => self.etas_to_moments(feats * self.state.theta()),
            PredictorKind::ParamAvg => self.etas_to_moments(feats * &self.mean),
            PredictorKind::PredAvgTaylor => {
                let eta_bar = feats * &self.mean;
                let cov = self.cov.as_ref().expect("taylor predictor carries cov");
                let quad = (feats * cov).component_mul(feats).column_sum();
                let mut out = DVector::zeros(feats.nrows());
                for i in 0..feats.nrows() {
                    family::check_eta(self.fam, eta_bar[i], "taylor prediction")?;
                    let raw =
                        self.fam.mean(eta_bar[i]) + 0.5 * quad[i] * self.fam.third(eta_bar[i]);
                    if !raw.is_finite() {
                        return Err(Error::NonFinite("taylor-corrected prediction".into()));
                    }
                    out[i] = self.fam.clamp_moment(raw);
                }
                Ok(out)
            }
            PredictorKind::PredAvgExact => self.exact_moment_batch(feats),
        }
    }

    /// Natural-scale predictions for a batch of points, one per row.
    pub fn natural_batch(&self, feats: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_width(feats)?;
        match self.kind {
            PredictorKind::Last => {
                let etas = feats * self.state.theta();
                self.check_etas(&etas)?;
                Ok(etas)
            }
            PredictorKind::ParamAvg => {
                let etas = feats * &self.mean;
                self.check_etas(&etas)?;
                Ok(etas)
            }
            PredictorKind::PredAvgExact | PredictorKind::PredAvgTaylor => {
                let mus = self.moment_batch(feats)?;
                Ok(mus.map(|m| self.fam.natural_from_moment(self.fam.clamp_moment(m))))
            }
        }
    }

    /// Chunked evaluation of the exact prediction average: the history is
    /// multiplied against the feature block in slabs so memory stays bounded,
    /// and per-point sums are Kahan-compensated so the Gaussian case agrees
    /// with parameter averaging to near machine precision.
    fn exact_moment_batch(&self, feats: &DMatrix<f64>) -> Result<DVector<f64>> {
        let history = self.state.history();
        let npts = feats.nrows();
        let dim = feats.ncols();
        let ft = feats.transpose();
        let chunk = ((1usize << 22) / npts.max(1)).clamp(1, history.len());
        let mut sums = vec![0.0f64; npts];
        let mut comps = vec![0.0f64; npts];
        let mut block = DMatrix::zeros(chunk, dim);
        let mut prods = DMatrix::zeros(chunk, npts);
        for iters in history.chunks(chunk) {
            let rows = iters.len();
            for (r, th) in iters.iter().enumerate() {
                block.row_mut(r).tr_copy_from(th);
            }
            let mut view = prods.view_range_mut(0..rows, 0..npts);
            view.gemm(1.0, &block.view_range(0..rows, 0..dim), &ft, 0.0);
            for j in 0..npts {
                for i in 0..rows {
                    let eta = prods[(i, j)];
                    family::check_eta(self.fam, eta, "exact prediction average")?;
                    let y = self.fam.mean(eta) - comps[j];
                    let t = sums[j] + y;
                    comps[j] = (t - sums[j]) - y;
                    sums[j] = t;
                }
            }
        }
        let k = history.len() as f64;
        Ok(DVector::from_iterator(npts, sums.iter().map(|s| s / k)))
    }

    fn etas_to_moments(&self, etas: DVector<f64>) -> Result<DVector<f64>> {
        self.check_etas(&etas)?;
        Ok(etas.map(|e| self.fam.mean(e)))
    }

    fn check_width(&self, feats: &DMatrix<f64>) -> Result<()> {
        if feats.ncols() != self.fm.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.fm.output_dim(),
                got: feats.ncols(),
            });
        }
        Ok(())
    }

    fn mean_of_eta(&self, eta: f64) -> Result<f64> {
        family::check_eta(self.fam, eta, "prediction")?;
        Ok(self.fam.mean(eta))
    }

    fn check_etas(&self, etas: &DVector<f64>) -> Result<()> {
        for &eta in etas.iter() {
            family::check_eta(self.fam, eta, "prediction")?;
        }
        Ok(())
    }
}
