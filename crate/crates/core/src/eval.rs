//! Rank-based retrieval metrics and rank correlation.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("empty test set")]
    EmptyTestSet,
    #[error("k percent must lie in (0, 100], got {0}")]
    InvalidK(String),
    #[error("rank {rank} outside 1..={catalog_size}")]
    InvalidRank { rank: usize, catalog_size: usize },
    #[error("score lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rank correlation is undefined for constant input")]
    ConstantInput,
}

/// The 1-based rank of one hidden target within its candidate catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedTestCase {
    pub rank: usize,
    pub catalog_size: usize,
}

impl RankedTestCase {
    pub fn new(rank: usize, catalog_size: usize) -> Result<Self, EvalError> {
        if rank < 1 || rank > catalog_size {
            return Err(EvalError::InvalidRank { rank, catalog_size });
        }
        Ok(Self { rank, catalog_size })
    }
}

/// Fraction of cases whose target ranks within the top `k_percent` of the
/// catalog (ceiling threshold).
pub fn hit_rate_at(cases: &[RankedTestCase], k_percent: f64) -> Result<f64, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(EvalError::InvalidK(format!("{k_percent}")));
    }
    let hits = cases
        .iter()
        .filter(|c| {
            // Guard the ceiling against representation error at exact
            // integer thresholds (e.g. 10% of 100).
            let threshold = (k_percent * c.catalog_size as f64 / 100.0 - 1e-9).ceil().max(1.0);
            (c.rank as f64) <= threshold
        })
        .count();
    Ok(hits as f64 / cases.len() as f64)
}

/// Mean of 1 - rank/catalog over the cases.
pub fn mpr(cases: &[RankedTestCase]) -> Result<f64, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let sum: f64 = cases
        .iter()
        .map(|c| 1.0 - c.rank as f64 / c.catalog_size as f64)
        .sum();
    Ok(sum / cases.len() as f64)
}

/// Average-assigned ranks (ties share the mean of their positions).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            ranks[idx] = avg;
        }
        start = end + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average-assigned ranks.
pub fn spearman(model_scores: &[f64], ground_truth: &[f64]) -> Result<f64, EvalError> {
    if model_scores.len() != ground_truth.len() {
        return Err(EvalError::LengthMismatch(model_scores.len(), ground_truth.len()));
    }
    if model_scores.len() < 2 {
        return Err(EvalError::EmptyTestSet);
    }
    let ra = average_ranks(model_scores);
    let rb = average_ranks(ground_truth);
    let n = ra.len() as f64;
    let mean_a: f64 = ra.iter().sum::<f64>() / n;
    let mean_b: f64 = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..ra.len() {
        let da = ra[i] - mean_a;
        let db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok(cov / (var_a * var_b).sqrt())
}
