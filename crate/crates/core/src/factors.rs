//! Variational factor types and the moment algebra consumed by the update
//! equations and by posterior-predictive scoring.
//!
//! All Gaussian factors carry diagonal precision only. Precision entries are
//! clamped into `[PRECISION_FLOOR, PRECISION_CAP]` so reciprocals stay finite.

use thiserror::Error;

/// Smallest representable per-entry precision.
pub const PRECISION_FLOOR: f64 = 1e-8;
/// Largest representable per-entry precision; factors at the cap are treated
/// as deterministic for practical purposes.
pub const PRECISION_CAP: f64 = 1e8;

/// Below this |delta| the Jaakkola coefficient switches to its analytic limit.
const LAMBDA_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FactorError {
    #[error("factor dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Diagonal-covariance Gaussian posterior factor for a vector variable
/// (dimension 1 for scalar variables such as biases).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFactor {
    mean: Vec<f64>,
    precision: Vec<f64>,
}

impl GaussianFactor {
    /// Builds a factor, clamping precision entries into the legal range.
    pub fn new(mean: Vec<f64>, precision: Vec<f64>) -> Self {
        assert_eq!(mean.len(), precision.len(), "mean/precision length mismatch");
        let precision = precision
            .into_iter()
            .map(|p| p.clamp(PRECISION_FLOOR, PRECISION_CAP))
            .collect();
        Self { mean, precision }
    }

    /// Zero mean, unit precision.
    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    /// A factor pinned (up to the precision cap) at `mean`.
    pub fn deterministic(mean: Vec<f64>) -> Self {
        let dim = mean.len();
        Self::new(mean, vec![PRECISION_CAP; dim])
    }

    pub fn scalar(mean: f64, precision: f64) -> Self {
        Self::new(vec![mean], vec![precision])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision_diag(&self) -> &[f64] {
        &self.precision
    }

    /// Elementwise reciprocal of the precision diagonal.
    pub fn variance_diag(&self) -> Vec<f64> {
        self.precision.iter().map(|p| 1.0 / p).collect()
    }

    pub fn variance(&self, d: usize) -> f64 {
        1.0 / self.precision[d]
    }

    /// Mean of a scalar (dimension-1) factor.
    pub fn mean_scalar(&self) -> f64 {
        debug_assert_eq!(self.dim(), 1);
        self.mean[0]
    }

    /// Variance of a scalar (dimension-1) factor.
    pub fn variance_scalar(&self) -> f64 {
        debug_assert_eq!(self.dim(), 1);
        1.0 / self.precision[0]
    }

    /// E[z^2] for a scalar factor.
    pub fn second_moment_scalar(&self) -> f64 {
        self.mean_scalar() * self.mean_scalar() + self.variance_scalar()
    }

    /// Sum over dimensions of E[z_d^2].
    pub fn expected_sq_norm(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.precision)
            .map(|(m, p)| m * m + 1.0 / p)
            .sum()
    }
}

/// Gamma posterior factor for a precision variable.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaFactor {
    pub shape: f64,
    pub rate: f64,
}

impl GammaFactor {
    pub fn new(shape: f64, rate: f64) -> Self {
        assert!(shape > 0.0 && rate > 0.0, "Gamma parameters must be positive");
        Self { shape, rate }
    }

    /// E[tau] = shape / rate; this is the precision value the updates consume.
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Elementwise E[z_d^2] = mu_d^2 + sigma_d^2.
pub fn second_moment_diag(f: &GaussianFactor) -> Vec<f64> {
    f.mean
        .iter()
        .zip(&f.precision)
        .map(|(m, p)| m * m + 1.0 / p)
        .collect()
}

/// E[(a . b)^2] for independent factors of equal dimension.
pub fn expected_sq_dot(a: &GaussianFactor, b: &GaussianFactor) -> Result<f64, FactorError> {
    if a.dim() != b.dim() {
        return Err(FactorError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mean_dot: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| x * y).sum();
    let mut acc = mean_dot * mean_dot;
    for d in 0..a.dim() {
        let (ma, va) = (a.mean[d], a.variance(d));
        let (mb, vb) = (b.mean[d], b.variance(d));
        acc += ma * ma * vb + va * mb * mb + va * vb;
    }
    Ok(acc)
}

/// E[||u - s||^2] where s is the average of the parent factors (0 when none),
/// all factors independent under q. Accumulated as squared differences so the
/// result stays nonnegative under cancellation.
pub fn expected_sq_norm_diff(u: &GaussianFactor, parents: &[&GaussianFactor]) -> f64 {
    if parents.is_empty() {
        return u.expected_sq_norm();
    }
    let inv = 1.0 / parents.len() as f64;
    let mut acc = 0.0;
    for d in 0..u.dim() {
        let s_d: f64 = parents.iter().map(|h| h.mean()[d]).sum::<f64>() * inv;
        let diff = u.mean[d] - s_d;
        acc += diff * diff + u.variance(d);
    }
    let parent_var: f64 = parents
        .iter()
        .map(|h| h.variance_diag().iter().sum::<f64>())
        .sum();
    acc + inv * inv * parent_var
}

/// mu_a^T E[z z^T] mu_b for a diagonal factor z independent of a and b.
pub fn mean_quadratic(z: &GaussianFactor, a: &GaussianFactor, b: &GaussianFactor) -> f64 {
    let dot_az: f64 = a.mean().iter().zip(z.mean()).map(|(p, q)| p * q).sum();
    let dot_zb: f64 = z.mean().iter().zip(b.mean()).map(|(p, q)| p * q).sum();
    let mut acc = dot_az * dot_zb;
    for d in 0..z.dim() {
        acc += a.mean()[d] * z.variance(d) * b.mean()[d];
    }
    acc
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log sigma(x), computed without overflow for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// The logistic-bound coefficient lambda(delta) = (sigma(delta) - 1/2) / (2 delta),
/// continuously extended to 1/8 at delta = 0.
pub fn jaakkola_lambda(delta: f64) -> f64 {
    let a = delta.abs();
    if a <= LAMBDA_EPS {
        0.125
    } else {
        (sigmoid(a) - 0.5) / (2.0 * a)
    }
}
