//! Feature maps: the identity/linear map and the Nystrom column-sampling
//! kernel map, plus kernel evaluation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for the inverse square root of the landmark
/// Gram matrix; directions below `cutoff * lambda_max` are zeroed.
pub const EIG_CUTOFF_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Laplacian,
    Gaussian,
}

impl KernelKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "laplacian" => Ok(Self::Laplacian),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Config(format!(
                "unknown kernel '{other}' (expected laplacian | gaussian)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Laplacian => "laplacian",
            Self::Gaussian => "gaussian",
        }
    }
}

/// Unit-diagonal kernel with bandwidth `sigma`:
/// Laplacian `exp(-||s - t||_1 / sigma)`, Gaussian `exp(-||s - t||_2^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    pub kind: KernelKind,
    pub sigma: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma}")));
        }
        Ok(Self { kind, sigma })
    }

    pub fn eval(&self, s: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
        if s.len() != t.len() {
            return Err(Error::DimensionMismatch { expected: s.len(), got: t.len() });
        }
        Ok(match self.kind {
            KernelKind::Laplacian => {
                let d1: f64 = s.iter().zip(t.iter()).map(|(a, b)| (a - b).abs()).sum();
                (-d1 / self.sigma).exp()
            }
            KernelKind::Gaussian => {
                let d2: f64 = s.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * self.sigma * self.sigma)).exp()
            }
        })
    }
}

/// Nystrom map built from `m` landmark points: `x -> W K(I, x)` where
/// `W = K(I, I)^{-1/2}` (pseudo-inverse square root).
#[derive(Debug, Clone)]
pub struct NystromMap {
    landmarks: Vec<DVector<f64>>,
    whiten: DMatrix<f64>,
    kernel: Kernel,
}

impl NystromMap {
    pub fn landmarks(&self) -> &[DVector<f64>] {
        &self.landmarks
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }
}

/// Deterministic map from raw inputs to the model's feature space.
#[derive(Debug, Clone)]
pub enum FeatureMap {
    /// Identity map; `output_dim` equals the input dimension.
    Linear { dim: usize },
    Nystrom(NystromMap),
}

impl FeatureMap {
    pub fn linear(dim: usize) -> Self {
        Self::Linear { dim }
    }

    /// Builds the Nystrom map: forms `K(I, I)`, takes its symmetric
    /// eigendecomposition, and inverts square roots of eigenvalues above the
    /// relative cutoff (below-cutoff directions are zeroed).
    pub fn nystrom(kernel: Kernel, landmarks: Vec<DVector<f64>>) -> Result<Self> {
        let m = landmarks.len();
        if m == 0 {
            return Err(Error::DegenerateLandmarks("no landmarks".into()));
        }
        let dim = landmarks[0].len();
        for l in &landmarks {
            if l.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: l.len() });
            }
            if !l.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("landmark coordinates".into()));
            }
        }

        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let k = kernel.eval(&landmarks[i], &landmarks[j])?;
                gram[(i, j)] = k;
                gram[(j, i)] = k;
            }
        }
        if !gram.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("landmark kernel matrix".into()));
        }

        let eig = SymmetricEigen::new(gram);
        let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max_ev.is_finite() || max_ev <= 0.0 {
            return Err(Error::DegenerateLandmarks(format!(
                "largest Gram eigenvalue {max_ev} is not positive"
            )));
        }
        let cutoff = EIG_CUTOFF_REL * max_ev;
        if eig.eigenvalues.iter().all(|&l| l <= cutoff) {
            return Err(Error::DegenerateLandmarks(
                "all Gram eigenvalues below cutoff".into(),
            ));
        }

        let inv_sqrt = DVector::from_iterator(
            m,
            eig.eigenvalues.iter().map(|&l| if l > cutoff { 1.0 / l.sqrt() } else { 0.0 }),
        );
        // W = V diag(1/sqrt(lambda)) V'
        let scaled = {
            let mut v = eig.eigenvectors.clone();
            for (c, s) in inv_sqrt.iter().enumerate() {
                v.column_mut(c).scale_mut(*s);
            }
            v
        };
        let whiten = &scaled * eig.eigenvectors.transpose();

        Ok(Self::Nystrom(NystromMap { landmarks, whiten, kernel }))
    }

    /// Dimension of mapped feature vectors.
    pub fn output_dim(&self) -> usize {
        match self {
            Self::Linear { dim } => *dim,
            Self::Nystrom(n) => n.landmarks.len(),
        }
    }

    /// Dimension of accepted raw inputs.
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Linear { dim } => *dim,
            Self::Nystrom(n) => n.landmarks[0].len(),
        }
    }

    pub fn map(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        match self {
            Self::Linear { .. } => Ok(x.clone()),
            Self::Nystrom(n) => {
                let mut kx = DVector::zeros(n.landmarks.len());
                for (i, l) in n.landmarks.iter().enumerate() {
                    kx[i] = n.kernel.eval(l, x)?;
                }
                Ok(&n.whiten * kx)
            }
        }
    }
}
