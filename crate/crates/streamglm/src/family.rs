//! One-dimensional exponential-family links: the log-partition function `a`
//! and its first three derivatives, plus the per-sample GLM negative
//! log-likelihood and its gradient factor.
//!
//! With natural parameter `eta = phi' theta`, the per-sample loss is
//! `-y * eta + a(eta)` and its gradient in `theta` is `(a'(eta) - y) * phi`.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Natural parameters above this make `exp` overflow for the Poisson family;
/// evaluation errors out instead of propagating infinities.
pub const POISSON_ETA_MAX: f64 = 700.0;

/// Clamp width for moment-scale predictions near the boundary of the domain.
pub const MOMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFamily {
    /// Bernoulli responses in {0,1}; `a(t) = log(1 + e^t)`, `a'` is the sigmoid.
    Logistic,
    /// Count responses in N; `a(t) = e^t`.
    Poisson,
    /// Real responses with unit variance; `a(t) = t^2 / 2`.
    Gaussian,
}

impl LinkFamily {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "logistic" => Ok(Self::Logistic),
            "poisson" => Ok(Self::Poisson),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Config(format!(
                "unknown family '{other}' (expected logistic | poisson | gaussian)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::Poisson => "poisson",
            Self::Gaussian => "gaussian",
        }
    }

    /// Log-partition function `a(t)`.
    ///
    /// The logistic branch is evaluated as `max(t, 0) + log1p(e^{-|t|})` so it
    /// stays finite for |t| in the hundreds.
    pub fn log_partition(self, t: f64) -> f64 {
        match self {
            Self::Logistic => t.max(0.0) + (-t.abs()).exp().ln_1p(),
            Self::Poisson => t.exp(),
            Self::Gaussian => 0.5 * t * t,
        }
    }

    /// Moment map `a'(t)`: sigmoid, exponential, or identity.
    pub fn mean(self, t: f64) -> f64 {
        match self {
            Self::Logistic => sigmoid(t),
            Self::Poisson => t.exp(),
            Self::Gaussian => t,
        }
    }

    /// `a''(t)`, the conditional variance of the response.
    pub fn variance(self, t: f64) -> f64 {
        match self {
            // u/(1+u)^2 with u = e^{-|t|} avoids the 1-sigma cancellation in
            // the tails (a''(t) is even in t).
            Self::Logistic => {
                let u = (-t.abs()).exp();
                u / ((1.0 + u) * (1.0 + u))
            }
            Self::Poisson => t.exp(),
            Self::Gaussian => 1.0,
        }
    }

    /// `a'''(t)`, used by the second-order prediction-average correction.
    pub fn third(self, t: f64) -> f64 {
        match self {
            // a'''(t) = a''(t)(1 - 2 sigma(t)) is odd in t; written with
            // u = e^{-|t|} for tail accuracy.
            Self::Logistic => {
                let u = (-t.abs()).exp();
                let var = u / ((1.0 + u) * (1.0 + u));
                -t.signum() * var * (1.0 - u) / (1.0 + u)
            }
            Self::Poisson => t.exp(),
            Self::Gaussian => 0.0,
        }
    }

    /// Inverse moment map `(a')^{-1}(mu)`: logit, log, or identity.
    pub fn natural_from_moment(self, mu: f64) -> f64 {
        match self {
            Self::Logistic => (mu / (1.0 - mu)).ln(),
            Self::Poisson => mu.ln(),
            Self::Gaussian => mu,
        }
    }

    /// Clamp a moment-scale value into the family's moment domain.
    pub fn clamp_moment(self, mu: f64) -> f64 {
        match self {
            Self::Logistic => mu.clamp(MOMENT_EPS, 1.0 - MOMENT_EPS),
            Self::Poisson => mu.max(MOMENT_EPS),
            Self::Gaussian => mu,
        }
    }

    /// Whether `y` lies in the family's response support.
    pub fn valid_response(self, y: f64) -> bool {
        match self {
            Self::Logistic => y == 0.0 || y == 1.0,
            Self::Poisson => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
            Self::Gaussian => y.is_finite(),
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn check_eta(fam: LinkFamily, eta: f64, context: &'static str) -> Result<()> {
    if !eta.is_finite() {
        return Err(Error::NumericOverflow { context, eta });
    }
    if fam == LinkFamily::Poisson && eta > POISSON_ETA_MAX {
        return Err(Error::NumericOverflow { context, eta });
    }
    Ok(())
}

/// Per-sample negative log-likelihood `-y * eta + a(eta)`.
pub fn loss(fam: LinkFamily, eta: f64, y: f64) -> Result<f64> {
    check_eta(fam, eta, "loss")?;
    let v = -y * eta + fam.log_partition(eta);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericOverflow { context: "loss", eta })
    }
}

/// Scalar gradient factor `a'(eta) - y`; the full gradient is `(a'(eta) - y) * phi`.
pub fn loss_grad_scalar(fam: LinkFamily, eta: f64, y: f64) -> Result<f64> {
    check_eta(fam, eta, "loss gradient")?;
    let g = fam.mean(eta) - y;
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::NumericOverflow { context: "loss gradient", eta })
    }
}

/// One observation: raw input point and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DVector<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: DVector<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const FAMILIES: [LinkFamily; 3] =
        [LinkFamily::Logistic, LinkFamily::Poisson, LinkFamily::Gaussian];

    #[test]
    fn loss_examples() {
        assert_relative_eq!(
            loss(LinkFamily::Logistic, 0.0, 1.0).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-15
        );
        assert_relative_eq!(loss(LinkFamily::Gaussian, 3.0, 3.0).unwrap(), -4.5);
        // -2 + e^1
        assert_relative_eq!(
            loss(LinkFamily::Poisson, 1.0, 2.0).unwrap(),
            std::f64::consts::E - 2.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn grad_examples() {
        assert_relative_eq!(loss_grad_scalar(LinkFamily::Logistic, 0.0, 1.0).unwrap(), -0.5);
        assert_relative_eq!(loss_grad_scalar(LinkFamily::Gaussian, 2.0, 0.0).unwrap(), 2.0);
        // sigma(10)
        assert_relative_eq!(
            loss_grad_scalar(LinkFamily::Logistic, 10.0, 0.0).unwrap(),
            0.9999546021312976,
            max_relative = 1e-12
        );
    }

    #[test]
    fn overflow_is_an_error() {
        assert!(loss(LinkFamily::Poisson, 701.0, 1.0).is_err());
        assert!(loss_grad_scalar(LinkFamily::Poisson, 800.0, 0.0).is_err());
        assert!(loss(LinkFamily::Logistic, f64::INFINITY, 0.0).is_err());
        assert!(loss(LinkFamily::Gaussian, f64::NAN, 0.0).is_err());
        // Large logistic etas are fine thanks to the log1p form.
        assert!(loss(LinkFamily::Logistic, 500.0, 1.0).unwrap().is_finite());
        assert!(loss(LinkFamily::Logistic, -500.0, 0.0).unwrap().is_finite());
    }

    #[test]
    fn known_derivative_values() {
        let f = LinkFamily::Logistic;
        assert_relative_eq!(f.mean(0.0), 0.5);
        assert_relative_eq!(f.variance(0.0), 0.25);
        assert_relative_eq!(f.third(0.0), 0.0);
        let g = LinkFamily::Gaussian;
        assert_relative_eq!(g.log_partition(2.0), 2.0);
        assert_relative_eq!(g.mean(7.0), 7.0);
        assert_relative_eq!(g.variance(7.0), 1.0);
        assert_relative_eq!(g.third(7.0), 0.0);
        let p = LinkFamily::Poisson;
        for t in [-3.0f64, 0.0, 2.5] {
            let e = t.exp();
            assert_relative_eq!(p.log_partition(t), e);
            assert_relative_eq!(p.mean(t), e);
            assert_relative_eq!(p.variance(t), e);
            assert_relative_eq!(p.third(t), e);
        }
    }

    #[test]
    fn moment_link_round_trip() {
        for fam in FAMILIES {
            for t in [-5.0, -0.3, 0.0, 1.7, 4.0] {
                let mu = fam.mean(t);
                assert_relative_eq!(fam.natural_from_moment(mu), t, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn response_support() {
        assert!(LinkFamily::Logistic.valid_response(0.0));
        assert!(LinkFamily::Logistic.valid_response(1.0));
        assert!(!LinkFamily::Logistic.valid_response(0.5));
        assert!(LinkFamily::Poisson.valid_response(3.0));
        assert!(!LinkFamily::Poisson.valid_response(-1.0));
        assert!(!LinkFamily::Poisson.valid_response(2.5));
        assert!(LinkFamily::Gaussian.valid_response(-7.25));
        assert!(!LinkFamily::Gaussian.valid_response(f64::NAN));
    }

    fn central_diff(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    proptest! {
        // a' ~ da/dt, a'' ~ da'/dt, a''' ~ da''/dt on t in [-20, 20].
        #[test]
        fn derivative_chain_matches_finite_differences(t in -20.0f64..20.0) {
            let h = 1e-5 * (1.0 + t.abs());
            for fam in FAMILIES {
                let d1 = central_diff(|u| fam.log_partition(u), t, h);
                let d2 = central_diff(|u| fam.mean(u), t, h);
                let d3 = central_diff(|u| fam.variance(u), t, h);
                // Relative tolerance plus an absolute floor for the roundoff
                // of differencing order-one values (logistic tails, where the
                // derivatives underflow long before the function does).
                let tol = |v: f64| 1e-6 * v.abs() + 1e-10;
                prop_assert!((fam.mean(t) - d1).abs() <= tol(d1));
                prop_assert!((fam.variance(t) - d2).abs() <= tol(d2));
                prop_assert!((fam.third(t) - d3).abs() <= tol(d3));
            }
        }

        #[test]
        fn grad_matches_loss_finite_difference(eta in -15.0f64..15.0, y01 in 0u8..2) {
            for fam in FAMILIES {
                let y = match fam {
                    LinkFamily::Logistic => y01 as f64,
                    LinkFamily::Poisson => (y01 as f64) * 3.0,
                    LinkFamily::Gaussian => (y01 as f64) - 0.5,
                };
                let h = 1e-6 * (1.0 + eta.abs());
                let d = central_diff(|u| loss(fam, u, y).unwrap(), eta, h);
                let g = loss_grad_scalar(fam, eta, y).unwrap();
                // The loss carries terms of order (1 + |eta|) that cancel in
                // the tails, so the finite difference keeps roundoff of that
                // size divided by 2h; allow an absolute floor for it.
                prop_assert!((g - d).abs() <= 1e-6 * d.abs() + 1e-9 * (1.0 + eta.abs()));
            }
        }

        // loss is convex in eta.
        #[test]
        fn loss_is_convex_in_eta(e1 in -10.0f64..10.0, e2 in -10.0f64..10.0, lam in 0.0f64..1.0) {
            for fam in FAMILIES {
                let y = if fam == LinkFamily::Gaussian { 0.3 } else { 1.0 };
                let mid = lam * e1 + (1.0 - lam) * e2;
                let lhs = loss(fam, mid, y).unwrap();
                let rhs = lam * loss(fam, e1, y).unwrap() + (1.0 - lam) * loss(fam, e2, y).unwrap();
                prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()));
            }
        }

        // Logistic loss is symmetric under (eta, y) -> (-eta, 1 - y).
        #[test]
        fn logistic_label_flip_symmetry(eta in -50.0f64..50.0, y01 in 0u8..2) {
            let y = y01 as f64;
            let a = loss(LinkFamily::Logistic, eta, y).unwrap();
            let b = loss(LinkFamily::Logistic, -eta, 1.0 - y).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
