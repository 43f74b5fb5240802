//! Approximate posterior-predictive scoring and ranking over a trained state,
//! plus an empirical check of the Gaussian score approximation.
//!
//! A pair score is a sum of independent coordinate products under the
//! factorized posterior; its first two moments are exact, the score density
//! is approximated as normal, and the logistic-Gaussian integral by the
//! probit-style closed form.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::factors::{sigmoid, FactorError, GaussianFactor};
use crate::updates::{expected_sq_bilinear, mean_bilinear, ModelState, PairKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InferenceError {
    #[error("entity index {0} out of range")]
    EntityOutOfRange(u32),
    #[error("unknown relation index {0}")]
    UnknownRelation(usize),
    #[error("query aggregation requires at least one factor")]
    EmptyQuery,
    #[error("candidate ranking requires at least one candidate")]
    EmptyCandidates,
    #[error("score variance is degenerate (0); KS against a point mass is undefined")]
    DegenerateVariance,
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// First and second central moment of a pair score under the posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Moments of u . v + b for independent factors.
pub fn score_moments_cooc(
    u: &GaussianFactor,
    v: &GaussianFactor,
    b: &GaussianFactor,
) -> Result<ScoreMoments, FactorError> {
    if u.dim() != v.dim() {
        return Err(FactorError::DimensionMismatch { left: u.dim(), right: v.dim() });
    }
    let mut mean = b.mean_scalar();
    let mut variance = b.variance_scalar();
    for d in 0..u.dim() {
        let (mu, vu) = (u.mean()[d], u.variance(d));
        let (mv, vv) = (v.mean()[d], v.variance(d));
        mean += mu * mv;
        variance += mu * mu * vv + vu * mv * mv + vu * vv;
    }
    Ok(ScoreMoments { mean, variance })
}

/// Moments of u^T W v + r through the map's column factors; the second
/// moment comes from the shared expected-outer-product machinery.
pub fn score_moments_rel(
    u: &GaussianFactor,
    v: &GaussianFactor,
    x_cols: &[GaussianFactor],
    y_cols: &[GaussianFactor],
    r: &GaussianFactor,
) -> Result<ScoreMoments, FactorError> {
    if u.dim() != v.dim() {
        return Err(FactorError::DimensionMismatch { left: u.dim(), right: v.dim() });
    }
    let bil = mean_bilinear(u, x_cols, y_cols, v);
    let second = expected_sq_bilinear(u, v, x_cols, y_cols);
    Ok(ScoreMoments {
        mean: bil + r.mean_scalar(),
        variance: (second - bil * bil).max(0.0) + r.variance_scalar(),
    })
}

/// The logistic-Gaussian integral in its probit-style closed form:
/// sigma(mean / sqrt(1 + pi * variance / 8)).
pub fn probit_logistic_integral(m: ScoreMoments) -> f64 {
    sigmoid(m.mean / (1.0 + std::f64::consts::PI * m.variance / 8.0).sqrt())
}

fn check_entity(state: &ModelState, i: u32) -> Result<(), InferenceError> {
    if (i as usize) < state.u.len() {
        Ok(())
    } else {
        Err(InferenceError::EntityOutOfRange(i))
    }
}

fn check_relation(state: &ModelState, k: usize) -> Result<(), InferenceError> {
    if k < state.n_relations() {
        Ok(())
    } else {
        Err(InferenceError::UnknownRelation(k))
    }
}

/// Posterior-predictive probability that entity `j` relates to entity `i`
/// under `kind` (co-occurrence or a typed relation).
pub fn predict(i: u32, j: u32, kind: PairKind, state: &ModelState) -> Result<f64, InferenceError> {
    check_entity(state, i)?;
    let query = &state.u[i as usize];
    predict_for_query(query, j, kind, state)
}

/// `predict` with an explicit (possibly aggregated) query factor.
pub fn predict_for_query(
    query: &GaussianFactor,
    j: u32,
    kind: PairKind,
    state: &ModelState,
) -> Result<f64, InferenceError> {
    check_entity(state, j)?;
    let moments = match kind {
        PairKind::Cooc => score_moments_cooc(query, &state.v[j as usize], &state.b[j as usize])?,
        PairKind::Rel(k) => {
            check_relation(state, k)?;
            score_moments_rel(
                query,
                &state.v[j as usize],
                &state.x[k],
                &state.y[k],
                &state.r[k][j as usize],
            )?
        }
    };
    Ok(probit_logistic_integral(moments))
}

/// Averages independent factors into the query representation: mean of means,
/// variances scaled by 1/m^2.
pub fn aggregate_query(factors: &[&GaussianFactor]) -> Result<GaussianFactor, InferenceError> {
    let first = factors.first().ok_or(InferenceError::EmptyQuery)?;
    let dim = first.dim();
    for f in factors {
        if f.dim() != dim {
            return Err(FactorError::DimensionMismatch { left: dim, right: f.dim() }.into());
        }
    }
    let m = factors.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut variance = vec![0.0; dim];
    for f in factors {
        for d in 0..dim {
            mean[d] += f.mean()[d] / m;
            variance[d] += f.variance(d) / (m * m);
        }
    }
    let precision = variance.iter().map(|v| 1.0 / v).collect();
    Ok(GaussianFactor::new(mean, precision))
}

/// Scores every candidate against the query and sorts descending by
/// probability, ties broken by ascending id.
pub fn rank_candidates(
    query: &GaussianFactor,
    candidates: &[u32],
    kind: PairKind,
    state: &ModelState,
) -> Result<Vec<(u32, f64)>, InferenceError> {
    if candidates.is_empty() {
        return Err(InferenceError::EmptyCandidates);
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for &j in candidates {
        scored.push((j, predict_for_query(query, j, kind, state)?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored)
}

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

/// Kolmogorov-Smirnov distance between Monte-Carlo samples of u . v + b and
/// the normal law with the score's analytic moments.
pub fn validate_normal_approx(
    u: &GaussianFactor,
    v: &GaussianFactor,
    b: &GaussianFactor,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64, InferenceError> {
    assert!(samples >= 2, "need at least two samples");
    let moments = score_moments_cooc(u, v, b)?;
    // Fully pinned factors sit at the precision cap, so "zero" variance shows
    // up as a handful of cap reciprocals.
    if moments.variance < 1e-7 {
        return Err(InferenceError::DegenerateVariance);
    }
    let sd = moments.variance.sqrt();
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut score = b.mean_scalar() + rng.sample::<f64, _>(StandardNormal) * b.variance_scalar().sqrt();
        for d in 0..u.dim() {
            let zu: f64 = rng.sample(StandardNormal);
            let zv: f64 = rng.sample(StandardNormal);
            let su = u.mean()[d] + zu * u.variance(d).sqrt();
            let sv = v.mean()[d] + zv * v.variance(d).sqrt();
            score += su * sv;
        }
        draws.push(score);
    }
    draws.sort_by(|a, c| a.partial_cmp(c).unwrap());
    let n = samples as f64;
    let mut ks: f64 = 0.0;
    for (idx, &x) in draws.iter().enumerate() {
        let cdf = normal_cdf(x, moments.mean, sd);
        let hi = (idx as f64 + 1.0) / n - cdf;
        let lo = cdf - idx as f64 / n;
        ks = ks.max(hi).max(lo);
    }
    Ok(ks)
}
