//! Constant-step-size SGD over a single pass of samples.
//!
//! The trainer maintains, online, everything the predictors need: the current
//! iterate θ_n, the running mean θ̄_n = (1/(n+1)) Σ_{i=0}^n θ_i (Kahan-summed
//! so it matches batch recomputation to near machine precision), the empirical
//! covariance of the iterates (Welford update, population normalization), and
//! optionally a strided history of iterates for exact prediction averaging.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::eval::MetricRow;
use crate::family::{self, LinkFamily, Sample};
use crate::features::FeatureMap;

/// Iterate norm beyond which the run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Settings for one SGD run.
#[derive(Debug, Clone)]
pub struct SgdConfig {
    /// Constant step size γ ≥ 0. Zero makes every step a no-op, which is
    /// occasionally useful as a control run.
    pub gamma: f64,
    /// ℓ₂ regularization weight λ ≥ 0 (adds λθ to the gradient).
    pub lambda: f64,
    /// Initial iterate; zeros when absent.
    pub theta0: Option<DVector<f64>>,
    /// Keep a (strided) copy of the iterates for exact prediction averaging.
    pub store_history: bool,
    /// Keep iterates whose index is divisible by this stride (θ_0 always
    /// qualifies). Stride 1 stores everything.
    pub history_stride: u64,
    /// Iterates with index < burnin are excluded from the running mean and
    /// covariance. The default 0 includes θ_0, matching
    /// θ̄_n = (1/(n+1)) Σ_{i=0}^n θ_i.
    pub burnin: u64,
}

impl SgdConfig {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            lambda: 0.0,
            theta0: None,
            store_history: false,
            history_stride: 1,
            burnin: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.history_stride == 0 {
            return Err(Error::Config("history.stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// State of an SGD run after n steps.
#[derive(Debug, Clone)]
pub struct TrainerState {
    cfg: SgdConfig,
    theta: DVector<f64>,
    /// Kahan-compensated running sum of accumulated iterates.
    sum: DVector<f64>,
    comp: DVector<f64>,
    /// Number of iterates accumulated into the moments (n+1 when burnin = 0).
    count: u64,
    /// Welford running mean, used only inside the covariance update.
    wmean: DVector<f64>,
    m2: DMatrix<f64>,
    /// Steps taken so far; the current iterate is θ_n.
    n: u64,
    history: Vec<DVector<f64>>,
}

impl TrainerState {
    pub fn new(cfg: &SgdConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        let theta = match &cfg.theta0 {
            Some(t0) => {
                if t0.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: t0.len() });
                }
                t0.clone()
            }
            None => DVector::zeros(dim),
        };
        let mut state = Self {
            cfg: cfg.clone(),
            theta,
            sum: DVector::zeros(dim),
            comp: DVector::zeros(dim),
            count: 0,
            wmean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            n: 0,
            history: Vec::new(),
        };
        if state.cfg.burnin == 0 {
            state.accumulate();
        }
        if state.cfg.store_history {
            state.history.push(state.theta.clone());
        }
        Ok(state)
    }

    /// Folds the current iterate into the running sum and covariance.
    fn accumulate(&mut self) {
        self.count += 1;
        for i in 0..self.theta.len() {
            let y = self.theta[i] - self.comp[i];
            let t = self.sum[i] + y;
            self.comp[i] = (t - self.sum[i]) - y;
            self.sum[i] = t;
        }
        let delta = &self.theta - &self.wmean;
        self.wmean.axpy(1.0 / self.count as f64, &delta, 1.0);
        let delta2 = &self.theta - &self.wmean;
        self.m2.ger(1.0, &delta, &delta2, 1.0);
    }

    /// One gradient step on the mapped sample:
    /// θ ← θ − γ[(a′(φ^⊤θ) − y)φ + λθ].
    pub fn step(&mut self, fam: LinkFamily, fm: &FeatureMap, s: &Sample) -> Result<()> {
        let phi = fm.map(&s.x)?;
        self.step_mapped(fam, &phi, s.y)
    }

    /// As [`step`](Self::step) but with the feature vector already mapped.
    pub fn step_mapped(&mut self, fam: LinkFamily, phi: &DVector<f64>, y: f64) -> Result<()> {
        if phi.len() != self.theta.len() {
            return Err(Error::DimensionMismatch { expected: self.theta.len(), got: phi.len() });
        }
        let eta = self.theta.dot(phi);
        family::check_eta(fam, eta, "sgd step")?;
        let g = fam.mean(eta) - y;
        let gamma = self.cfg.gamma;
        // θ = (1 − γλ)θ − γ g φ
        self.theta.axpy(-gamma * g, phi, 1.0 - gamma * self.cfg.lambda);
        self.n += 1;

        let norm = self.theta.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence {
                iteration: self.n,
                detail: format!("iterate norm {norm:.3e} (gamma likely too large)"),
            });
        }

        if self.n >= self.cfg.burnin {
            self.accumulate();
        }
        if self.cfg.store_history && self.n % self.cfg.history_stride == 0 {
            self.history.push(self.theta.clone());
        }
        Ok(())
    }

    /// Current iterate θ_n.
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Running mean of the accumulated iterates. Before any iterate has been
    /// accumulated (possible only with burnin > 0) this falls back to θ_n.
    pub fn mean(&self) -> DVector<f64> {
        if self.count == 0 {
            self.theta.clone()
        } else {
            &self.sum / self.count as f64
        }
    }

    /// Empirical covariance of the accumulated iterates (population
    /// normalization, i.e. divided by the iterate count). Symmetrized to
    /// absorb rounding asymmetry from the rank-1 updates.
    pub fn cov(&self) -> DMatrix<f64> {
        if self.count == 0 {
            return DMatrix::zeros(self.theta.len(), self.theta.len());
        }
        let scale = 1.0 / (2.0 * self.count as f64);
        (&self.m2 + self.m2.transpose()) * scale
    }

    /// Number of steps taken.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of iterates folded into the running moments.
    pub fn iterate_count(&self) -> u64 {
        self.count
    }

    /// Stored iterates (empty unless store_history was set).
    pub fn history(&self) -> &[DVector<f64>] {
        &self.history
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    /// Builds a state whose iterate set is exactly `iters`; used by predictor
    /// tests to pin the history, mean and covariance to hand-picked values.
    #[cfg(test)]
    pub(crate) fn from_iterates(iters: &[DVector<f64>]) -> Self {
        assert!(!iters.is_empty());
        let dim = iters[0].len();
        let mut cfg = SgdConfig::new(0.0);
        cfg.store_history = true;
        cfg.theta0 = Some(iters[0].clone());
        let mut state = Self::new(&cfg, dim).unwrap();
        for th in &iters[1..] {
            state.theta = th.clone();
            state.n += 1;
            state.accumulate();
            state.history.push(th.clone());
        }
        state
    }
}

/// Runs SGD over the whole stream, invoking `eval_hook` at each checkpoint
/// iteration and collecting the rows it produces. Checkpoints must be
/// strictly increasing and within the stream length.
pub fn train_stream<I, H>(
    cfg: &SgdConfig,
    fam: LinkFamily,
    fm: &FeatureMap,
    samples: I,
    checkpoints: &[u64],
    mut eval_hook: H,
) -> Result<(TrainerState, Vec<MetricRow>)>
where
    I: IntoIterator<Item = Result<Sample>>,
    H: FnMut(&TrainerState) -> Result<Vec<MetricRow>>,
{
    for w in checkpoints.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Config(format!(
                "checkpoints must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if checkpoints.first().is_some_and(|&c| c == 0) {
        return Err(Error::Config("checkpoints start at iteration 1".into()));
    }

    let mut state = TrainerState::new(cfg, fm.output_dim())?;
    let mut rows = Vec::new();
    let mut next = 0usize;
    for s in samples {
        let s = s?;
        state.step(fam, fm, &s)?;
        if next < checkpoints.len() && state.n == checkpoints[next] {
            rows.extend(eval_hook(&state)?);
            next += 1;
        }
    }
    if next < checkpoints.len() {
        return Err(Error::Config(format!(
            "checkpoint {} exceeds stream length {}",
            checkpoints[next],
            state.n
        )));
    }
    Ok((state, rows))
}

/// One step of the unconditional-family recursion
/// θ ← θ − γ(∇A(θ) − T(x)).
pub fn uncond_step(
    theta: &DVector<f64>,
    gamma: f64,
    grad_a: impl Fn(&DVector<f64>) -> DVector<f64>,
    t_x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if theta.len() != t_x.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), got: t_x.len() });
    }
    let mut out = grad_a(theta);
    if out.len() != theta.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), got: out.len() });
    }
    // θ − γ(∇A(θ) − T) = −γ·(∇A(θ) − T) + θ
    out -= t_x;
    out.axpy(1.0, theta, -gamma);
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("unconditional recursion step".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(vals: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(vals)
    }

    fn sample(x: &[f64], y: f64) -> Sample {
        Sample::new(v(x), y)
    }

    #[test]
    fn hand_checked_steps() {
        // Gaussian, d=1, θ=0, γ=0.1: a′(0)=0, update = −0.1·(0−1)·1 = 0.1.
        let fm = FeatureMap::linear(1);
        let mut st = TrainerState::new(&SgdConfig::new(0.1), 1).unwrap();
        st.step(LinkFamily::Gaussian, &fm, &sample(&[1.0], 1.0)).unwrap();
        assert_relative_eq!(st.theta()[0], 0.1);

        // Logistic, γ=1: a′(0)=0.5, update = −1·(0.5−0)·1 = −0.5.
        let mut st = TrainerState::new(&SgdConfig::new(1.0), 1).unwrap();
        st.step(LinkFamily::Logistic, &fm, &sample(&[1.0], 0.0)).unwrap();
        assert_relative_eq!(st.theta()[0], -0.5);

        // Zero feature vector leaves θ unchanged when λ=0.
        let fm2 = FeatureMap::linear(2);
        let mut cfg = SgdConfig::new(0.7);
        cfg.theta0 = Some(v(&[1.0, -2.0]));
        let mut st = TrainerState::new(&cfg, 2).unwrap();
        st.step(LinkFamily::Logistic, &fm2, &sample(&[0.0, 0.0], 1.0)).unwrap();
        assert_eq!(st.theta(), &v(&[1.0, -2.0]));
    }

    #[test]
    fn regularization_shrinks_theta() {
        let fm = FeatureMap::linear(1);
        let mut cfg = SgdConfig::new(0.1);
        cfg.lambda = 0.5;
        cfg.theta0 = Some(v(&[2.0]));
        let mut st = TrainerState::new(&cfg, 1).unwrap();
        // φ = 0 so only the λ term acts: θ ← (1 − γλ)θ = 0.95·2.
        st.step(LinkFamily::Gaussian, &fm, &sample(&[0.0], 0.0)).unwrap();
        assert_relative_eq!(st.theta()[0], 1.9);
    }

    #[test]
    fn initial_moments() {
        let mut cfg = SgdConfig::new(0.1);
        cfg.theta0 = Some(v(&[3.0, -1.0]));
        let st = TrainerState::new(&cfg, 2).unwrap();
        assert_eq!(st.mean(), v(&[3.0, -1.0]));
        assert_eq!(st.cov(), DMatrix::zeros(2, 2));
        assert_eq!(st.n(), 0);
    }

    #[test]
    fn gamma_zero_is_a_noop() {
        let fm = FeatureMap::linear(2);
        let mut cfg = SgdConfig::new(0.0);
        cfg.theta0 = Some(v(&[0.3, 0.4]));
        let samples: Vec<_> = (0..50).map(|i| Ok(sample(&[1.0, i as f64], 1.0))).collect();
        let (st, rows) =
            train_stream(&cfg, LinkFamily::Logistic, &fm, samples, &[], |_| Ok(vec![])).unwrap();
        assert_eq!(st.theta(), &v(&[0.3, 0.4]));
        assert_eq!(st.mean(), v(&[0.3, 0.4]));
        assert_eq!(st.n(), 50);
        assert!(rows.is_empty());
    }

    #[test]
    fn checkpoint_rows_match_contract() {
        let fm = FeatureMap::linear(1);
        let cfg = SgdConfig::new(0.05);
        let samples: Vec<_> = (0..64).map(|i| Ok(sample(&[1.0], (i % 2) as f64))).collect();
        let cps = [1u64, 2, 4, 8, 16, 32, 64];
        let (st, rows) =
            train_stream(&cfg, LinkFamily::Logistic, &fm, samples, &cps, |state| {
                Ok(vec![MetricRow {
                    iteration: state.n(),
                    predictor: "last".into(),
                    metric: "probe".into(),
                    value: state.theta()[0],
                }])
            })
            .unwrap();
        assert_eq!(st.n(), 64);
        assert_eq!(rows.len(), cps.len());
        assert!(rows.iter().zip(cps).all(|(r, c)| r.iteration == c));
    }

    #[test]
    fn checkpoint_beyond_stream_is_an_error() {
        let fm = FeatureMap::linear(1);
        let cfg = SgdConfig::new(0.05);
        let samples: Vec<_> = (0..10).map(|_| Ok(sample(&[1.0], 1.0))).collect();
        let err = train_stream(&cfg, LinkFamily::Logistic, &fm, samples, &[5, 20], |_| Ok(vec![]))
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn online_moments_match_batch_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fm = FeatureMap::linear(3);
        let mut cfg = SgdConfig::new(0.2);
        cfg.store_history = true;
        let mut st = TrainerState::new(&cfg, 3).unwrap();
        for _ in 0..400 {
            let x = DVector::from_fn(3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let y = f64::from(rng.random::<f64>() < 0.5);
            st.step(LinkFamily::Logistic, &fm, &Sample::new(x, y)).unwrap();
        }
        let hist = st.history();
        assert_eq!(hist.len(), 401);
        let k = hist.len() as f64;
        let batch_mean = hist.iter().fold(DVector::zeros(3), |acc, h| acc + h) / k;
        assert_relative_eq!(st.mean(), batch_mean, max_relative = 1e-10);
        let mut batch_cov = DMatrix::zeros(3, 3);
        for h in hist {
            let d = h - &batch_mean;
            batch_cov.ger(1.0, &d, &d, 1.0);
        }
        batch_cov /= k;
        let cov = st.cov();
        assert_relative_eq!(cov, batch_cov, epsilon = 1e-12, max_relative = 1e-10);
        // Symmetric PSD.
        assert_eq!(cov, cov.transpose());
        let min_ev = cov
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_ev >= -1e-10);
    }

    #[test]
    fn history_stride_keeps_every_kth_iterate() {
        let fm = FeatureMap::linear(1);
        let mut cfg = SgdConfig::new(0.1);
        cfg.store_history = true;
        cfg.history_stride = 3;
        let mut st = TrainerState::new(&cfg, 1).unwrap();
        for _ in 0..10 {
            st.step(LinkFamily::Gaussian, &fm, &sample(&[1.0], 1.0)).unwrap();
        }
        // Indices 0, 3, 6, 9.
        assert_eq!(st.history().len(), 4);
    }

    #[test]
    fn burnin_excludes_early_iterates() {
        let fm = FeatureMap::linear(1);
        let mut cfg = SgdConfig::new(0.1);
        cfg.burnin = 5;
        cfg.store_history = true;
        let mut st = TrainerState::new(&cfg, 1).unwrap();
        for _ in 0..10 {
            st.step(LinkFamily::Gaussian, &fm, &sample(&[1.0], 2.0)).unwrap();
        }
        assert_eq!(st.iterate_count(), 6); // iterates 5..=10
        assert!(st.history().len() == 11); // history ignores burnin
    }

    #[test]
    fn divergence_is_detected_with_iteration() {
        // Gaussian with γ=10 on x=1, y=0: θ ← −9θ, exponential blow-up.
        let fm = FeatureMap::linear(1);
        let mut cfg = SgdConfig::new(10.0);
        cfg.theta0 = Some(v(&[1.0]));
        let mut st = TrainerState::new(&cfg, 1).unwrap();
        let mut seen = None;
        for _ in 0..100 {
            if let Err(e) = st.step(LinkFamily::Gaussian, &fm, &sample(&[1.0], 0.0)) {
                seen = Some(e);
                break;
            }
        }
        match seen {
            Some(Error::Divergence { iteration, .. }) => assert!(iteration > 0 && iteration < 30),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn poisson_eta_overflow_is_reported() {
        let fm = FeatureMap::linear(1);
        let mut cfg = SgdConfig::new(0.1);
        cfg.theta0 = Some(v(&[800.0]));
        let mut st = TrainerState::new(&cfg, 1).unwrap();
        let err = st.step(LinkFamily::Poisson, &fm, &sample(&[1.0], 1.0)).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { .. }));
    }

    #[test]
    fn identical_seeds_give_bit_identical_states() {
        let run = || {
            let (stream, _) = synth::draw_wellspecified(
                LinkFamily::Logistic,
                v(&[1.0, -1.0]),
                500,
                42,
            )
            .unwrap();
            let fm = FeatureMap::linear(2);
            let cfg = SgdConfig::new(0.1);
            train_stream(&cfg, LinkFamily::Logistic, &fm, stream, &[], |_| Ok(vec![]))
                .unwrap()
                .0
        };
        let a = run();
        let b = run();
        assert_eq!(a.theta().as_slice(), b.theta().as_slice());
        assert_eq!(a.mean().as_slice(), b.mean().as_slice());
        assert_eq!(a.cov().as_slice(), b.cov().as_slice());
    }

    #[test]
    fn averaged_gradient_vanishes_under_stationarity() {
        // Well-specified logistic, d=2, γ=0.05: after discarding the first
        // 10^3 iterations, the averaged gradient norm is small and shrinks
        // further when the run is ten times longer.
        let avg_grad_norm = |n: u64| {
            let theta_true = v(&[1.0, -1.0]);
            let (stream, _) =
                synth::draw_wellspecified(LinkFamily::Logistic, theta_true, n, 2024).unwrap();
            let fm = FeatureMap::linear(2);
            let cfg = SgdConfig::new(0.05);
            let mut st = TrainerState::new(&cfg, 2).unwrap();
            let discard = 1000u64;
            let mut acc = DVector::zeros(2);
            for s in stream {
                let s = s.unwrap();
                if st.n() >= discard {
                    let g = LinkFamily::Logistic.mean(st.theta().dot(&s.x)) - s.y;
                    acc.axpy(g, &s.x, 1.0);
                }
                st.step(LinkFamily::Logistic, &fm, &s).unwrap();
            }
            (acc / (n - discard) as f64).norm()
        };
        let short = avg_grad_norm(200_000);
        let long = avg_grad_norm(2_000_000);
        assert!(short < 5e-2, "averaged gradient norm {short}");
        assert!(long < short, "long run {long} should beat short run {short}");
    }

    #[test]
    fn uncond_step_examples() {
        // Gaussian ∇A = identity: 0 − 0.5(0 − 2) = 1.
        let th = v(&[0.0]);
        let out = uncond_step(&th, 0.5, |t| t.clone(), &v(&[2.0])).unwrap();
        assert_relative_eq!(out[0], 1.0);
        // Fixed point: ∇A(θ) = T leaves θ unchanged.
        let th = v(&[1.5]);
        let out = uncond_step(&th, 0.7, |t| t.clone(), &v(&[1.5])).unwrap();
        assert_relative_eq!(out[0], 1.5);
        // γ = 0 leaves θ unchanged.
        let out = uncond_step(&th, 0.0, |t| t.clone(), &v(&[99.0])).unwrap();
        assert_relative_eq!(out[0], 1.5);
        // Non-finite results are rejected.
        let err = uncond_step(&th, 1.0, |t| t * f64::INFINITY, &v(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    proptest! {
        // The analytic gradient (a′(φ^⊤θ) − y)φ + λθ matches central finite
        // differences of f(θ) = −yφ^⊤θ + a(φ^⊤θ) + (λ/2)‖θ‖².
        #[test]
        fn gradient_matches_finite_differences(
            seed in 0u64..300,
            fam_ix in 0usize..3,
            lambda in 0.0f64..2.0,
        ) {
            let fam = [LinkFamily::Logistic, LinkFamily::Poisson, LinkFamily::Gaussian][fam_ix];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 3;
            let theta = DVector::from_fn(d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let phi = DVector::from_fn(d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let y = match fam {
                LinkFamily::Logistic => f64::from(rng.random::<f64>() < 0.5),
                LinkFamily::Poisson => (rng.random::<f64>() * 5.0).floor(),
                LinkFamily::Gaussian => rng.random::<f64>() * 4.0 - 2.0,
            };
            let f = |t: &DVector<f64>| {
                let eta = t.dot(&phi);
                -y * eta + fam.log_partition(eta) + 0.5 * lambda * t.norm_squared()
            };
            let eta = theta.dot(&phi);
            let grad = &phi * (fam.mean(eta) - y) + &theta * lambda;
            let h = 1e-6;
            for i in 0..d {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (f(&tp) - f(&tm)) / (2.0 * h);
                let tol = 1e-6 * grad[i].abs().max(1e-3);
                prop_assert!((grad[i] - fd).abs() <= tol,
                    "coord {}: analytic {} vs fd {}", i, grad[i], fd);
            }
        }
    }
}
