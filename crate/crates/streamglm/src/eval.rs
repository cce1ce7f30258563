//! Performance measures: Monte-Carlo oracle risk against the generating
//! model, best-linear reference fits, held-out negative log-likelihood for
//! real data, and the metric log emitted by experiment runs.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::family::{self, LinkFamily, Sample};
use crate::features::FeatureMap;
use crate::predictor::Predictor;

/// Gradient-norm target for the best-linear reference fit.
pub const FIT_GRAD_TOL: f64 = 1e-8;
/// Iteration cap for the best-linear reference fit.
pub const FIT_MAX_ITERS: u64 = 100_000;

type EtaFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// A synthetic generating model: the family, the natural-parameter function
/// η**, and a standard-normal input distribution of the stated dimension.
#[derive(Clone)]
pub struct OracleProblem {
    pub fam: LinkFamily,
    pub dim: usize,
    eta: EtaFn,
}

impl fmt::Debug for OracleProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleProblem")
            .field("fam", &self.fam)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl OracleProblem {
    pub fn new(
        fam: LinkFamily,
        dim: usize,
        eta: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { fam, dim, eta: Arc::new(eta) }
    }

    /// η**(x), the generating natural parameter.
    pub fn eta_star_star(&self, x: &DVector<f64>) -> f64 {
        (self.eta)(x)
    }

    /// μ**(x) = a′(η**(x)), the optimal prediction.
    pub fn mu_star_star(&self, x: &DVector<f64>) -> f64 {
        self.fam.mean(self.eta_star_star(x))
    }

    /// Seeded standard-normal input draws.
    pub fn sample_inputs(&self, n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect()
    }
}

/// A frozen Monte-Carlo evaluation set: input draws with their generating
/// natural parameters and optimal predictions. Reusing one set across all
/// predictors of a run gives common random numbers, so excess differences
/// between predictors carry no inter-predictor MC noise.
#[derive(Debug, Clone)]
pub struct McSet {
    pub xs: Vec<DVector<f64>>,
    /// η**(x_i).
    pub etas: DVector<f64>,
    /// μ**(x_i).
    pub mu: DVector<f64>,
    pub seed: u64,
}

impl McSet {
    pub fn draw(problem: &OracleProblem, n_mc: usize, seed: u64) -> Result<Self> {
        if n_mc == 0 {
            return Err(Error::Config("mc.n must be >= 1".into()));
        }
        let xs = problem.sample_inputs(n_mc, seed);
        let etas = DVector::from_iterator(n_mc, xs.iter().map(|x| problem.eta_star_star(x)));
        for (i, &e) in etas.iter().enumerate() {
            if !e.is_finite() {
                return Err(Error::NonFinite(format!("η** at MC point {i}")));
            }
        }
        let mu = etas.map(|e| problem.fam.mean(e));
        if !mu.iter().all(|m| m.is_finite()) {
            return Err(Error::NonFinite("μ** on MC set".into()));
        }
        Ok(Self { xs, etas, mu, seed })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Feature matrix of the MC points under a map (one row per point).
    pub fn features(&self, fm: &FeatureMap) -> Result<DMatrix<f64>> {
        let mut feats = DMatrix::zeros(self.xs.len(), fm.output_dim());
        for (i, x) in self.xs.iter().enumerate() {
            feats.row_mut(i).tr_copy_from(&fm.map(x)?);
        }
        Ok(feats)
    }
}

/// Per-point losses ℓ_i = −μ**(x_i)·η_i + a(η_i) for given natural-scale
/// predictions over the set.
pub fn loss_vector(fam: LinkFamily, set: &McSet, etas: &DVector<f64>) -> Result<DVector<f64>> {
    if etas.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: etas.len() });
    }
    let mut out = DVector::zeros(set.len());
    for i in 0..set.len() {
        let eta = etas[i];
        if !eta.is_finite() {
            return Err(Error::NonFinite(format!("prediction η at MC point {i}")));
        }
        family::check_eta(fam, eta, "oracle risk")?;
        out[i] = -set.mu[i] * eta + fam.log_partition(eta);
    }
    Ok(out)
}

/// Mean and standard error (sample std over √n) of a value vector.
pub fn mean_se(vals: &DVector<f64>) -> (f64, f64) {
    let n = vals.len();
    let mean = vals.sum() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Monte-Carlo estimate of 𝓕(η) = E[−μ**(x)·η(x) + a(η(x))] with its
/// standard error. The draws depend only on (problem, n_mc, seed), so two
/// calls with the same seed evaluate on identical x's.
pub fn oracle_risk(
    problem: &OracleProblem,
    eta: impl Fn(&DVector<f64>) -> Result<f64>,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let set = McSet::draw(problem, n_mc, seed)?;
    let mut etas = DVector::zeros(set.len());
    for (i, x) in set.xs.iter().enumerate() {
        etas[i] = eta(x)?;
    }
    let losses = loss_vector(problem.fam, &set, &etas)?;
    Ok(mean_se(&losses))
}

/// Monte-Carlo estimate of 𝓕** (the risk of η** itself).
pub fn oracle_f_star_star(problem: &OracleProblem, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    let set = McSet::draw(problem, n_mc, seed)?;
    let losses = loss_vector(problem.fam, &set, &set.etas)?;
    Ok(mean_se(&losses))
}

/// Paired excess risk: mean and standard error of ℓ_i(η) − ref_loss_i on the
/// common MC set.
pub fn paired_excess(
    fam: LinkFamily,
    set: &McSet,
    etas: &DVector<f64>,
    ref_loss: &DVector<f64>,
) -> Result<(f64, f64)> {
    if ref_loss.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: ref_loss.len() });
    }
    let losses = loss_vector(fam, set, etas)?;
    Ok(mean_se(&(losses - ref_loss)))
}

/// Gradient norm below which the full Newton step is taken without a line
/// search: there the Armijo decrease (≈ ½‖∇‖²/L) falls under the roundoff of
/// the n-term objective sum, while the step itself is safely inside the
/// quadratic basin for these losses.
const FIT_PURE_NEWTON_GRAD: f64 = 1e-4;

/// Full-batch minimization of the empirical (regularized) negative
/// log-likelihood, run until the gradient norm falls below 1e-8. Uses damped
/// Newton steps — backtracking line search on the exact (positive
/// semidefinite) Hessian — with a steepest-descent fallback when the
/// factorization fails. Targets may be fractional (e.g. μ** values), not
/// just family-supported labels.
pub fn fit_best_linear(
    fam: LinkFamily,
    fm: &FeatureMap,
    data: &[Sample],
    lambda: f64,
) -> Result<DVector<f64>> {
    if data.is_empty() {
        return Err(Error::Config("best-linear fit needs at least one sample".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let n = data.len();
    let d = fm.output_dim();
    let mut feats = DMatrix::zeros(n, d);
    for (i, s) in data.iter().enumerate() {
        feats.row_mut(i).tr_copy_from(&fm.map(&s.x)?);
    }
    let ys = DVector::from_iterator(n, data.iter().map(|s| s.y));

    // Objective value, or None when the candidate overflows the family
    // (treated as +∞ by the line search).
    let objective = |theta: &DVector<f64>| -> Option<f64> {
        let etas = &feats * theta;
        let mut acc = 0.0;
        for i in 0..n {
            let eta = etas[i];
            if family::check_eta(fam, eta, "best-linear fit").is_err() {
                return None;
            }
            acc += -ys[i] * eta + fam.log_partition(eta);
        }
        let val = acc / n as f64 + 0.5 * lambda * theta.norm_squared();
        val.is_finite().then_some(val)
    };

    let mut theta = DVector::zeros(d);
    let mut weighted = DMatrix::zeros(n, d);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..FIT_MAX_ITERS {
        let etas = &feats * &theta;
        for i in 0..n {
            family::check_eta(fam, etas[i], "best-linear fit")?;
        }
        let resid = etas.map_with_location(|i, _, e| fam.mean(e) - ys[i]);
        let mut grad = feats.tr_mul(&resid) / n as f64;
        grad.axpy(lambda, &theta, 1.0);
        grad_norm = grad.norm();
        if grad_norm <= FIT_GRAD_TOL {
            return Ok(theta);
        }

        // Newton direction from the exact Hessian FᵀWF/n + λI with
        // W = diag(a″(η_i)); the weights can make it numerically singular in
        // the tails, in which case we retreat to steepest descent.
        weighted.copy_from(&feats);
        for i in 0..n {
            weighted.row_mut(i).scale_mut(fam.variance(etas[i]));
        }
        let mut hess = feats.tr_mul(&weighted) / n as f64;
        for i in 0..d {
            hess[(i, i)] += lambda;
        }
        let (dir, slope, newton) = match hess.cholesky() {
            Some(chol) => {
                let dir = -chol.solve(&grad);
                let slope = grad.dot(&dir);
                if slope < 0.0 {
                    (dir, slope, true)
                } else {
                    (-&grad, -grad_norm * grad_norm, false)
                }
            }
            None => (-&grad, -grad_norm * grad_norm, false),
        };

        let full = &theta + &dir;
        if newton && grad_norm <= FIT_PURE_NEWTON_GRAD && objective(&full).is_some() {
            theta = full;
            continue;
        }
        let here = objective(&theta)
            .ok_or_else(|| Error::NonFinite("best-linear objective".into()))?;
        // Backtracking (Armijo) line search from the full step.
        let mut t = 1.0f64;
        loop {
            let cand = &theta + &dir * t;
            if let Some(val) = objective(&cand) {
                if val <= here + 1e-4 * t * slope {
                    theta = cand;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-18 {
                return Err(Error::NonConvergence { grad_norm, iterations: FIT_MAX_ITERS });
            }
        }
    }
    Err(Error::NonConvergence { grad_norm, iterations: FIT_MAX_ITERS })
}

/// Mean per-sample held-out negative log-likelihood of a logistic predictor,
/// with predictions clamped away from {0, 1}; returns (mean, standard error).
pub fn heldout_nll(pred: &Predictor<'_>, test: &[Sample]) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut vals = DVector::zeros(test.len());
    for (i, s) in test.iter().enumerate() {
        vals[i] = nll_term(pred.fam, pred.predict(&s.x)?, s.y)?;
    }
    Ok(mean_se(&vals))
}

/// As [`heldout_nll`] but over a precomputed feature matrix (one row per test
/// sample), avoiding repeated feature mapping across checkpoints.
pub fn heldout_nll_batch(
    pred: &Predictor<'_>,
    feats: &DMatrix<f64>,
    ys: &[f64],
) -> Result<(f64, f64)> {
    if ys.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if feats.nrows() != ys.len() {
        return Err(Error::DimensionMismatch { expected: ys.len(), got: feats.nrows() });
    }
    let mus = pred.moment_batch(feats)?;
    Ok(mean_se(&nll_vector(pred.fam, &mus, ys)?))
}

/// Per-sample held-out negative log-likelihoods for predicted moments `mus`
/// against labels `ys` — the paired building block behind [`heldout_nll`].
pub fn nll_vector(fam: LinkFamily, mus: &DVector<f64>, ys: &[f64]) -> Result<DVector<f64>> {
    if mus.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: ys.len(), got: mus.len() });
    }
    let mut vals = DVector::zeros(ys.len());
    for i in 0..ys.len() {
        vals[i] = nll_term(fam, mus[i], ys[i])?;
    }
    Ok(vals)
}

fn nll_term(fam: LinkFamily, mu: f64, y: f64) -> Result<f64> {
    if fam != LinkFamily::Logistic {
        return Err(Error::Config("held-out NLL is defined for the logistic family".into()));
    }
    if y != 0.0 && y != 1.0 {
        return Err(Error::Config(format!("held-out labels must be 0/1, got {y}")));
    }
    let p = fam.clamp_moment(mu);
    Ok(-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
}

/// One metric observation at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iteration: u64,
    pub predictor: String,
    pub metric: String,
    pub value: f64,
}

/// Ordered metric rows from one training run.
#[derive(Debug, Clone, Default)]
pub struct MetricLog {
    pub rows: Vec<MetricRow>,
}

impl MetricLog {
    pub fn new(rows: Vec<MetricRow>) -> Self {
        Self { rows }
    }

    /// Serializes as CSV with the schema
    /// `iteration,predictor,metric,value,replication,seed`. Iterations must
    /// be nondecreasing within each (predictor, metric) series.
    pub fn write_csv<W: Write>(&self, mut w: W, replication: i64, seed: u64) -> Result<()> {
        let mut last: HashMap<(&str, &str), u64> = HashMap::new();
        for row in &self.rows {
            let key = (row.predictor.as_str(), row.metric.as_str());
            if let Some(&prev) = last.get(&key) {
                if row.iteration < prev {
                    return Err(Error::Config(format!(
                        "metric series {}/{} is not ordered: iteration {} after {}",
                        row.predictor, row.metric, row.iteration, prev
                    )));
                }
            }
            last.insert(key, row.iteration);
        }
        writeln!(w, "iteration,predictor,metric,value,replication,seed")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.iteration, row.predictor, row.metric, row.value, replication, seed
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SynthModel, SynthSpec};
    use crate::trainer::{train_stream, SgdConfig};
    use approx::assert_relative_eq;

    fn v(vals: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(vals)
    }

    #[test]
    fn logistic_zero_eta_risk_is_log_two() {
        let p = OracleProblem::new(LinkFamily::Logistic, 2, |x: &DVector<f64>| x[0].sin());
        let (risk, se) = oracle_risk(&p, |_| Ok(0.0), 500, 1).unwrap();
        assert_relative_eq!(risk, std::f64::consts::LN_2, epsilon = 1e-14);
        assert!(se < 1e-14);
    }

    #[test]
    fn gaussian_constant_eta_risk_is_half_square() {
        let p = OracleProblem::new(LinkFamily::Gaussian, 1, |_: &DVector<f64>| 0.0);
        let c = 1.7;
        let (risk, _) = oracle_risk(&p, |_| Ok(c), 300, 2).unwrap();
        assert_relative_eq!(risk, c * c / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn f_star_star_closed_forms() {
        let logistic = OracleProblem::new(LinkFamily::Logistic, 1, |_: &DVector<f64>| 0.0);
        let (f, _) = oracle_f_star_star(&logistic, 100, 3).unwrap();
        assert_relative_eq!(f, std::f64::consts::LN_2, epsilon = 1e-14);

        let c = 0.8;
        let gaussian = OracleProblem::new(LinkFamily::Gaussian, 1, move |_: &DVector<f64>| c);
        let (f, _) = oracle_f_star_star(&gaussian, 100, 4).unwrap();
        assert_relative_eq!(f, -c * c / 2.0, epsilon = 1e-12);

        let poisson = OracleProblem::new(LinkFamily::Poisson, 1, |_: &DVector<f64>| 0.0);
        let (f, _) = oracle_f_star_star(&poisson, 100, 5).unwrap();
        assert_relative_eq!(f, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eta_star_star_minimizes_pointwise() {
        // ℓ_i(η) is minimized at η**(x_i), so on any common MC set the risk
        // of η** is no larger than the risk of any other prediction rule.
        let spec = SynthSpec::new(SynthModel::SinSum, 7).unwrap();
        let problem = spec.oracle_problem();
        let set = McSet::draw(&problem, 2000, 11).unwrap();
        let base = loss_vector(problem.fam, &set, &set.etas).unwrap();
        for (a, b) in [(0.3, -0.2), (-1.0, 1.0), (0.0, 0.0), (2.0, 2.0)] {
            let etas = DVector::from_iterator(
                set.len(),
                set.xs.iter().map(|x| a * x[0] + b * x[1]),
            );
            let other = loss_vector(problem.fam, &set, &etas).unwrap();
            assert!(other.sum() - base.sum() >= -1e-10);
        }
    }

    #[test]
    fn common_random_numbers_are_bitwise_stable() {
        let p = OracleProblem::new(LinkFamily::Logistic, 3, |x: &DVector<f64>| x[0] - x[1]);
        let a = oracle_risk(&p, |x| Ok(x[2]), 1000, 99).unwrap();
        let b = oracle_risk(&p, |x| Ok(x[2]), 1000, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_predictions_are_rejected() {
        let p = OracleProblem::new(LinkFamily::Logistic, 1, |_: &DVector<f64>| 0.0);
        let err = oracle_risk(&p, |_| Ok(f64::NAN), 10, 1).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn best_linear_least_squares_is_exact() {
        let fm = FeatureMap::linear(1);
        let data = [Sample::new(v(&[1.0]), 2.0)];
        let theta = fit_best_linear(LinkFamily::Gaussian, &fm, &data, 0.0).unwrap();
        assert_relative_eq!(theta[0], 2.0, epsilon = 1e-7);
    }

    #[test]
    fn best_linear_symmetric_logistic_is_zero() {
        let fm = FeatureMap::linear(1);
        let data = [Sample::new(v(&[1.0]), 1.0), Sample::new(v(&[1.0]), 0.0)];
        let theta = fit_best_linear(LinkFamily::Logistic, &fm, &data, 0.0).unwrap();
        assert!(theta[0].abs() <= 1e-8);
    }

    #[test]
    fn misspecified_model_has_a_strict_gap() {
        // Model 1 is not linear in x, so the best linear predictor is
        // strictly worse than η** on the oracle MC set.
        let spec = SynthSpec::new(SynthModel::SinSum, 21).unwrap();
        let problem = spec.oracle_problem();
        let (stream, _) = synth::draw(&spec, 10_000);
        let data: Vec<Sample> = stream.collect::<Result<_>>().unwrap();
        let fm = FeatureMap::linear(2);
        let theta = fit_best_linear(LinkFamily::Logistic, &fm, &data, 0.0).unwrap();

        let set = McSet::draw(&problem, 10_000, 22).unwrap();
        let ref_loss = loss_vector(problem.fam, &set, &set.etas).unwrap();
        let etas = DVector::from_iterator(
            set.len(),
            set.xs.iter().map(|x| theta.dot(x)),
        );
        let (gap, se) = paired_excess(problem.fam, &set, &etas, &ref_loss).unwrap();
        assert!(gap > 3.0 * se, "gap {gap} vs se {se}");
    }

    #[test]
    fn heldout_nll_examples() {
        let fm = FeatureMap::linear(1);
        // θ = 0 predicts one half everywhere.
        let (stream, _) =
            synth::draw_wellspecified(LinkFamily::Logistic, v(&[0.0]), 10, 1).unwrap();
        let test: Vec<Sample> = stream.collect::<Result<_>>().unwrap();
        let st = crate::trainer::TrainerState::new(&SgdConfig::new(0.0), 1).unwrap();
        let pred = Predictor::new(
            crate::predictor::PredictorKind::ParamAvg,
            LinkFamily::Logistic,
            &fm,
            &st,
        )
        .unwrap();
        let (nll, _) = heldout_nll(&pred, &test).unwrap();
        assert_relative_eq!(nll, std::f64::consts::LN_2, epsilon = 1e-12);

        // Perfect (clamped) predictions give essentially zero loss.
        let feats = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let ys = [1.0, 1.0];
        let mut big = SgdConfig::new(0.0);
        big.theta0 = Some(v(&[60.0]));
        let st = crate::trainer::TrainerState::new(&big, 1).unwrap();
        let pred = Predictor::new(
            crate::predictor::PredictorKind::Last,
            LinkFamily::Logistic,
            &fm,
            &st,
        )
        .unwrap();
        let (nll, _) = heldout_nll_batch(&pred, &feats, &ys).unwrap();
        assert!(nll >= 0.0 && nll < 1e-10, "nll {nll}");

        assert!(matches!(heldout_nll(&pred, &[]), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn heldout_nll_rejects_bad_labels_and_families() {
        let fm = FeatureMap::linear(1);
        let st = crate::trainer::TrainerState::new(&SgdConfig::new(0.0), 1).unwrap();
        let pred =
            Predictor::new(crate::predictor::PredictorKind::Last, LinkFamily::Gaussian, &fm, &st)
                .unwrap();
        let test = [Sample::new(v(&[1.0]), 1.0)];
        assert!(heldout_nll(&pred, &test).is_err());

        let pred =
            Predictor::new(crate::predictor::PredictorKind::Last, LinkFamily::Logistic, &fm, &st)
                .unwrap();
        let bad = [Sample::new(v(&[1.0]), 0.5)];
        assert!(heldout_nll(&pred, &bad).is_err());
    }

    #[test]
    fn metric_log_round_trip_and_ordering() {
        let log = MetricLog::new(vec![
            MetricRow { iteration: 10, predictor: "last".into(), metric: "nll".into(), value: 0.5 },
            MetricRow {
                iteration: 100,
                predictor: "last".into(),
                metric: "nll".into(),
                value: 0.25,
            },
        ]);
        let mut buf = Vec::new();
        log.write_csv(&mut buf, 0, 42).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "iteration,predictor,metric,value,replication,seed\n\
             10,last,nll,0.5,0,42\n100,last,nll,0.25,0,42\n"
        );

        let bad = MetricLog::new(vec![
            MetricRow { iteration: 100, predictor: "last".into(), metric: "nll".into(), value: 0.1 },
            MetricRow { iteration: 10, predictor: "last".into(), metric: "nll".into(), value: 0.2 },
        ]);
        assert!(bad.write_csv(Vec::new(), 0, 0).is_err());
    }

    #[test]
    fn trained_predictor_excess_is_nonnegative_up_to_noise() {
        // End-to-end sanity: a short well-specified run evaluated against 𝓕**.
        let theta_true = v(&[1.0, -1.0]);
        let (stream, problem) =
            synth::draw_wellspecified(LinkFamily::Logistic, theta_true, 20_000, 33).unwrap();
        let fm = FeatureMap::linear(2);
        let cfg = SgdConfig::new(0.1);
        let (st, _) =
            train_stream(&cfg, LinkFamily::Logistic, &fm, stream, &[], |_| Ok(vec![])).unwrap();
        let set = McSet::draw(&problem, 5000, 44).unwrap();
        let ref_loss = loss_vector(problem.fam, &set, &set.etas).unwrap();
        let pred = Predictor::new(
            crate::predictor::PredictorKind::ParamAvg,
            LinkFamily::Logistic,
            &fm,
            &st,
        )
        .unwrap();
        let feats = set.features(&fm).unwrap();
        let etas = pred.natural_batch(&feats).unwrap();
        let (excess, se) = paired_excess(problem.fam, &set, &etas, &ref_loss).unwrap();
        assert!(excess >= -3.0 * se, "excess {excess} below noise floor {se}");
        assert!(excess < 0.05, "short run should already be close, got {excess}");
    }
}
