//! Training orchestration: initialization, the per-epoch update schedule with
//! partition-set parallelism, the bounded free energy, and the fit loop.
//!
//! An epoch runs, in order: the u-side sweep over partition sets, the v-side
//! sweep, map columns (sequential over the column index, parallel across
//! relations), then all biases, then all precision factors. Steps inside one
//! phase touch mutually independent factors, so parallel execution matches
//! sequential execution exactly.

use std::time::Instant;

use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::factors::{
    expected_sq_norm_diff, jaakkola_lambda, log_sigmoid, GammaFactor, GaussianFactor,
};
use crate::graph::{EntityGraph, NodeId, Partition};
use crate::rng::stream_rng;
use crate::sampling::{build_epoch_dataset, CoOccurrenceData, EpochDataset, RelationData, SamplingError};
use crate::updates::{
    pair_moments, update_bias, update_gamma, update_leaf, update_parent, update_relation_bias,
    update_relation_map, update_variational, GammaTarget, MapSide, ModelState, PairKind, Side,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_2: f64 = std::f64::consts::LN_2;

/// Epoch index reserved for the fixed convergence-monitoring sample.
pub const MONITOR_EPOCH: u64 = u64::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Error, PartialEq)]
pub enum ElboError {
    #[error("non-finite bound: {term} term")]
    NonFinite { term: &'static str },
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Elbo(#[from] ElboError),
}

/// Hyperparameters and run controls for one training job.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Embedding dimension t.
    pub dim: usize,
    /// Negatives drawn per positive occurrence.
    pub neg_ratio: u32,
    /// Hard cap on epochs.
    pub epochs: u32,
    /// Gamma hyperprior shape.
    pub alpha: f64,
    /// Gamma hyperprior rate.
    pub beta: f64,
    /// Co-occurrence subsampling threshold.
    pub subsample_rho: f64,
    pub seed: u64,
    /// Relative bound-change threshold for early stopping.
    pub elbo_tol: f64,
    /// Parallelism degree; results are identical at any value.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 50,
            neg_ratio: 1,
            epochs: 40,
            alpha: 1.0,
            beta: 1.0,
            subsample_rho: 1e-3,
            seed: 0,
            elbo_tol: 1e-6,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim < 1 {
            return Err(ConfigError::Invalid("dim must be >= 1"));
        }
        if self.neg_ratio < 1 {
            return Err(ConfigError::Invalid("neg-ratio must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(ConfigError::Invalid("alpha and beta must be positive"));
        }
        if self.subsample_rho <= 0.0 {
            return Err(ConfigError::Invalid("subsample-rho must be positive"));
        }
        if self.elbo_tol <= 0.0 {
            return Err(ConfigError::Invalid("elbo-tol must be positive"));
        }
        if self.workers < 1 {
            return Err(ConfigError::Invalid("workers must be >= 1"));
        }
        Ok(())
    }
}

/// Draws initial factors: unit precision with standard-normal means for every
/// Gaussian factor, shape = rate = 1 for every Gamma factor.
pub fn initialize(graph: &EntityGraph, relations: &[RelationData], config: &TrainConfig) -> ModelState {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let t = config.dim;
    let n = graph.n_leaves();
    let c = graph.n_categories();

    let gauss_family = |purpose: &str, count: usize, dim: usize| -> Vec<GaussianFactor> {
        let mut rng = stream_rng(config.seed, purpose, 0);
        (0..count)
            .map(|_| {
                let mean = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                GaussianFactor::new(mean, vec![1.0; dim])
            })
            .collect()
    };
    let gamma_family = |count: usize| -> Vec<GammaFactor> {
        (0..count).map(|_| GammaFactor::new(1.0, 1.0)).collect()
    };

    let u = gauss_family("init/u", n, t);
    let v = gauss_family("init/v", n, t);
    let hu = gauss_family("init/hu", c, t);
    let hv = gauss_family("init/hv", c, t);
    let b = gauss_family("init/b", n, 1);
    let r: Vec<Vec<GaussianFactor>> = (0..relations.len())
        .map(|k| gauss_family(&format!("init/r{k}"), n, 1))
        .collect();
    let x: Vec<Vec<GaussianFactor>> = relations
        .iter()
        .enumerate()
        .map(|(k, rel)| gauss_family(&format!("init/x{k}"), rel.rank, t))
        .collect();
    let y: Vec<Vec<GaussianFactor>> = relations
        .iter()
        .enumerate()
        .map(|(k, rel)| gauss_family(&format!("init/y{k}"), rel.rank, t))
        .collect();

    ModelState {
        dim: t,
        u,
        v,
        hu,
        hv,
        b,
        r,
        x,
        y,
        tau_u: gamma_family(n),
        tau_v: gamma_family(n),
        tau_hu: gamma_family(c),
        tau_hv: gamma_family(c),
        tau_b: gamma_family(n),
        tau_r: (0..relations.len()).map(|_| gamma_family(n)).collect(),
        tau_x: relations.iter().map(|rel| gamma_family(rel.rank)).collect(),
        tau_y: relations.iter().map(|rel| gamma_family(rel.rank)).collect(),
    }
}

/// One coordinate update in the epoch schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStep {
    Leaf { side: Side, id: u32 },
    Parent { side: Side, id: u32 },
    MapColumn { side: MapSide, relation: usize, column: usize },
    Bias { id: u32 },
    RelationBias { relation: usize, id: u32 },
    Gamma(GammaTarget),
}

/// The epoch's update steps, grouped into phases. Steps within one phase are
/// mutually independent; phases run in order.
pub fn update_schedule(graph: &EntityGraph, partition: &Partition, ranks: &[usize]) -> Vec<Vec<UpdateStep>> {
    let mut phases: Vec<Vec<UpdateStep>> = Vec::new();
    for side in [Side::U, Side::V] {
        for set in &partition.sets {
            let phase = set
                .iter()
                .map(|&node| match node {
                    NodeId::Leaf(i) => UpdateStep::Leaf { side, id: i },
                    NodeId::Cat(c) => UpdateStep::Parent { side, id: c },
                })
                .collect();
            phases.push(phase);
        }
    }
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    for side in [MapSide::X, MapSide::Y] {
        for m in 0..max_rank {
            let phase: Vec<UpdateStep> = ranks
                .iter()
                .enumerate()
                .filter(|&(_, &rank)| m < rank)
                .map(|(k, _)| UpdateStep::MapColumn { side, relation: k, column: m })
                .collect();
            if !phase.is_empty() {
                phases.push(phase);
            }
        }
    }
    let n = graph.n_leaves() as u32;
    let mut bias_phase: Vec<UpdateStep> = (0..n).map(|id| UpdateStep::Bias { id }).collect();
    for k in 0..ranks.len() {
        bias_phase.extend((0..n).map(|id| UpdateStep::RelationBias { relation: k, id }));
    }
    if !bias_phase.is_empty() {
        phases.push(bias_phase);
    }
    let c = graph.n_categories() as u32;
    let mut gamma_phase: Vec<UpdateStep> = Vec::new();
    gamma_phase.extend((0..n).map(|i| UpdateStep::Gamma(GammaTarget::U(i))));
    gamma_phase.extend((0..c).map(|i| UpdateStep::Gamma(GammaTarget::Hu(i))));
    gamma_phase.extend((0..n).map(|i| UpdateStep::Gamma(GammaTarget::V(i))));
    gamma_phase.extend((0..c).map(|i| UpdateStep::Gamma(GammaTarget::Hv(i))));
    for (k, &rank) in ranks.iter().enumerate() {
        gamma_phase.extend((0..rank).map(|m| UpdateStep::Gamma(GammaTarget::X(k, m))));
        gamma_phase.extend((0..rank).map(|m| UpdateStep::Gamma(GammaTarget::Y(k, m))));
    }
    gamma_phase.extend((0..n).map(|i| UpdateStep::Gamma(GammaTarget::B(i))));
    for k in 0..ranks.len() {
        gamma_phase.extend((0..n).map(|i| UpdateStep::Gamma(GammaTarget::R(k, i))));
    }
    if !gamma_phase.is_empty() {
        phases.push(gamma_phase);
    }
    phases
}

/// The factor produced by one step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    Gaussian(GaussianFactor),
    Gamma(GammaFactor),
}

/// Computes one step against a read-only state.
pub fn compute_step(
    step: UpdateStep,
    state: &ModelState,
    graph: &EntityGraph,
    epoch: &EpochDataset,
    alpha: f64,
    beta: f64,
) -> StepResult {
    match step {
        UpdateStep::Leaf { side, id } => StepResult::Gaussian(update_leaf(id, side, state, graph, epoch)),
        UpdateStep::Parent { side, id } => StepResult::Gaussian(update_parent(id, side, state, graph)),
        UpdateStep::MapColumn { side, relation, column } => {
            StepResult::Gaussian(update_relation_map(column, relation, side, state, epoch))
        }
        UpdateStep::Bias { id } => StepResult::Gaussian(update_bias(id, state, epoch)),
        UpdateStep::RelationBias { relation, id } => {
            StepResult::Gaussian(update_relation_bias(id, relation, state, epoch))
        }
        UpdateStep::Gamma(target) => StepResult::Gamma(update_gamma(target, state, graph, alpha, beta)),
    }
}

/// Writes one step's result back into the state.
pub fn apply_step(state: &mut ModelState, step: UpdateStep, result: StepResult) {
    match (step, result) {
        (UpdateStep::Leaf { side: Side::U, id }, StepResult::Gaussian(f)) => state.u[id as usize] = f,
        (UpdateStep::Leaf { side: Side::V, id }, StepResult::Gaussian(f)) => state.v[id as usize] = f,
        (UpdateStep::Parent { side: Side::U, id }, StepResult::Gaussian(f)) => state.hu[id as usize] = f,
        (UpdateStep::Parent { side: Side::V, id }, StepResult::Gaussian(f)) => state.hv[id as usize] = f,
        (UpdateStep::MapColumn { side: MapSide::X, relation, column }, StepResult::Gaussian(f)) => {
            state.x[relation][column] = f
        }
        (UpdateStep::MapColumn { side: MapSide::Y, relation, column }, StepResult::Gaussian(f)) => {
            state.y[relation][column] = f
        }
        (UpdateStep::Bias { id }, StepResult::Gaussian(f)) => state.b[id as usize] = f,
        (UpdateStep::RelationBias { relation, id }, StepResult::Gaussian(f)) => {
            state.r[relation][id as usize] = f
        }
        (UpdateStep::Gamma(target), StepResult::Gamma(f)) => match target {
            GammaTarget::U(i) => state.tau_u[i as usize] = f,
            GammaTarget::V(i) => state.tau_v[i as usize] = f,
            GammaTarget::Hu(c) => state.tau_hu[c as usize] = f,
            GammaTarget::Hv(c) => state.tau_hv[c as usize] = f,
            GammaTarget::X(k, m) => state.tau_x[k][m] = f,
            GammaTarget::Y(k, m) => state.tau_y[k][m] = f,
            GammaTarget::B(i) => state.tau_b[i as usize] = f,
            GammaTarget::R(k, i) => state.tau_r[k][i as usize] = f,
        },
        (step, result) => unreachable!("mismatched step/result: {step:?} / {result:?}"),
    }
}

/// Runs one full epoch of updates over `data`.
pub fn train_epoch_with_data(
    state: &mut ModelState,
    graph: &EntityGraph,
    partition: &Partition,
    data: &EpochDataset,
    alpha: f64,
    beta: f64,
    pool: Option<&rayon::ThreadPool>,
) {
    let ranks: Vec<usize> = (0..state.n_relations()).map(|k| state.relation_rank(k)).collect();
    for phase in update_schedule(graph, partition, &ranks) {
        match pool {
            Some(pool) if phase.len() > 1 => {
                use rayon::prelude::*;
                let results: Vec<(UpdateStep, StepResult)> = pool.install(|| {
                    phase
                        .par_iter()
                        .map(|&step| (step, compute_step(step, state, graph, data, alpha, beta)))
                        .collect()
                });
                for (step, result) in results {
                    apply_step(state, step, result);
                }
            }
            _ => {
                for step in phase {
                    let result = compute_step(step, state, graph, data, alpha, beta);
                    apply_step(state, step, result);
                }
            }
        }
    }
}

/// Variational parameters frozen at a specific state, aligned with the pair
/// lists of one epoch dataset.
#[derive(Debug, Clone)]
pub struct FrozenVariational {
    pub cooc: Vec<f64>,
    pub rel: Vec<Vec<f64>>,
}

/// Captures the on-the-fly variational parameters at the current moments.
pub fn freeze_variational(state: &ModelState, data: &EpochDataset) -> FrozenVariational {
    FrozenVariational {
        cooc: data
            .cooc
            .pairs
            .iter()
            .map(|&(i, j, _, _)| update_variational(i, j, PairKind::Cooc, state))
            .collect(),
        rel: data
            .rel
            .iter()
            .enumerate()
            .map(|(k, pairs)| {
                pairs
                    .pairs
                    .iter()
                    .map(|&(i, j, _, _)| update_variational(i, j, PairKind::Rel(k), state))
                    .collect()
            })
            .collect(),
    }
}

/// The bounded free energy split into its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboBreakdown {
    pub cooc_data: f64,
    pub rel_data: f64,
    pub prior: f64,
    pub entropy: f64,
}

impl ElboBreakdown {
    pub fn total(&self) -> f64 {
        self.cooc_data + self.rel_data + self.prior + self.entropy
    }
}

fn pair_bound_term(label: i8, mean: f64, s: f64, frozen_xi: Option<f64>) -> f64 {
    let half_signed = f64::from(label) * mean / 2.0;
    match frozen_xi {
        Some(xi) => half_signed - xi / 2.0 - jaakkola_lambda(xi) * (s - xi * xi) + log_sigmoid(xi),
        None => {
            if s > 0.0 {
                // Envelope over xi: -xi/2 - lambda(xi)(s - xi^2) + log sigma(xi)
                // at xi = sqrt(s) collapses to -log(2 cosh(sqrt(s)/2)).
                let half = s.sqrt() / 2.0;
                half_signed - (half.abs() + (-2.0 * half.abs()).exp().ln_1p())
            } else {
                half_signed - s / 8.0 - LN_2
            }
        }
    }
}

fn gaussian_entropy(f: &GaussianFactor) -> f64 {
    let mut acc = 0.0;
    for d in 0..f.dim() {
        acc += 0.5 * (LN_2PI + 1.0 - f.precision_diag()[d].ln());
    }
    acc
}

fn gamma_entropy(g: &GammaFactor) -> f64 {
    g.shape - g.rate.ln() + ln_gamma(g.shape) + (1.0 - g.shape) * digamma(g.shape)
}

/// E[log p(z | tau)] + E[log p(tau)] for one Normal-Gamma block.
fn normal_gamma_prior(
    z: &GaussianFactor,
    tau: &GammaFactor,
    parents: &[&GaussianFactor],
    alpha: f64,
    beta: f64,
) -> f64 {
    let e_log_tau = digamma(tau.shape) - tau.rate.ln();
    let deviation = expected_sq_norm_diff(z, parents);
    let t = z.dim() as f64;
    let gauss = 0.5 * t * (e_log_tau - LN_2PI) - 0.5 * tau.mean() * deviation;
    let gamma = alpha * beta.ln() - ln_gamma(alpha) + (alpha - 1.0) * e_log_tau - beta * tau.mean();
    gauss + gamma
}

/// Computes the bounded free energy. With `frozen` the per-pair variational
/// parameters are held fixed; otherwise each pair uses its current optimum.
pub fn bounded_free_energy(
    state: &ModelState,
    graph: &EntityGraph,
    data: &EpochDataset,
    alpha: f64,
    beta: f64,
    frozen: Option<&FrozenVariational>,
) -> Result<ElboBreakdown, ElboError> {
    let mut cooc_data = 0.0;
    for (idx, &(i, j, label, count)) in data.cooc.pairs.iter().enumerate() {
        let (mean, s) = pair_moments(i, j, PairKind::Cooc, state);
        let xi = frozen.map(|f| f.cooc[idx]);
        cooc_data += f64::from(count) * pair_bound_term(label, mean, s, xi);
    }
    if !cooc_data.is_finite() {
        return Err(ElboError::NonFinite { term: "co-occurrence data" });
    }

    let mut rel_data = 0.0;
    for (k, pairs) in data.rel.iter().enumerate() {
        for (idx, &(i, j, label, count)) in pairs.pairs.iter().enumerate() {
            let (mean, s) = pair_moments(i, j, PairKind::Rel(k), state);
            let zeta = frozen.map(|f| f.rel[k][idx]);
            rel_data += f64::from(count) * pair_bound_term(label, mean, s, zeta);
        }
    }
    if !rel_data.is_finite() {
        return Err(ElboError::NonFinite { term: "relation data" });
    }

    let mut prior = 0.0;
    let mut entropy = 0.0;
    let parents_of = |side: Side, cats: &[u32]| -> Vec<&GaussianFactor> {
        cats.iter().map(|&c| state.parent(side, c)).collect()
    };
    for i in 0..graph.n_leaves() as u32 {
        let iu = i as usize;
        prior += normal_gamma_prior(&state.u[iu], &state.tau_u[iu], &parents_of(Side::U, graph.leaf_parents(i)), alpha, beta);
        prior += normal_gamma_prior(&state.v[iu], &state.tau_v[iu], &parents_of(Side::V, graph.leaf_parents(i)), alpha, beta);
        prior += normal_gamma_prior(&state.b[iu], &state.tau_b[iu], &[], alpha, beta);
        entropy += gaussian_entropy(&state.u[iu]) + gaussian_entropy(&state.v[iu]) + gaussian_entropy(&state.b[iu]);
        entropy += gamma_entropy(&state.tau_u[iu]) + gamma_entropy(&state.tau_v[iu]) + gamma_entropy(&state.tau_b[iu]);
        for k in 0..state.n_relations() {
            prior += normal_gamma_prior(&state.r[k][iu], &state.tau_r[k][iu], &[], alpha, beta);
            entropy += gaussian_entropy(&state.r[k][iu]) + gamma_entropy(&state.tau_r[k][iu]);
        }
    }
    for c in 0..graph.n_categories() as u32 {
        let cu = c as usize;
        prior += normal_gamma_prior(&state.hu[cu], &state.tau_hu[cu], &parents_of(Side::U, graph.cat_parents(c)), alpha, beta);
        prior += normal_gamma_prior(&state.hv[cu], &state.tau_hv[cu], &parents_of(Side::V, graph.cat_parents(c)), alpha, beta);
        entropy += gaussian_entropy(&state.hu[cu]) + gaussian_entropy(&state.hv[cu]);
        entropy += gamma_entropy(&state.tau_hu[cu]) + gamma_entropy(&state.tau_hv[cu]);
    }
    for k in 0..state.n_relations() {
        for m in 0..state.relation_rank(k) {
            prior += normal_gamma_prior(&state.x[k][m], &state.tau_x[k][m], &[], alpha, beta);
            prior += normal_gamma_prior(&state.y[k][m], &state.tau_y[k][m], &[], alpha, beta);
            entropy += gaussian_entropy(&state.x[k][m]) + gaussian_entropy(&state.y[k][m]);
            entropy += gamma_entropy(&state.tau_x[k][m]) + gamma_entropy(&state.tau_y[k][m]);
        }
    }
    if !prior.is_finite() {
        return Err(ElboError::NonFinite { term: "prior" });
    }
    if !entropy.is_finite() {
        return Err(ElboError::NonFinite { term: "entropy" });
    }

    Ok(ElboBreakdown { cooc_data, rel_data, prior, entropy })
}

/// The bounded free energy with on-the-fly variational parameters.
pub fn elbo(
    state: &ModelState,
    graph: &EntityGraph,
    data: &EpochDataset,
    alpha: f64,
    beta: f64,
) -> Result<f64, ElboError> {
    bounded_free_energy(state, graph, data, alpha, beta, None).map(|b| b.total())
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub elbo: f64,
    pub seconds: f64,
    pub cooc_weight: u64,
    pub rel_weight: u64,
}

/// Per-epoch bound values and timings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub converged: bool,
}

impl TrainingLog {
    /// Line-oriented rendering: epoch, bound, wall seconds, pair counts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "epoch {}\telbo {:.6}\tseconds {:.3}\tcooc-pairs {}\trel-pairs {}\n",
                r.epoch, r.elbo, r.seconds, r.cooc_weight, r.rel_weight
            ));
        }
        out.push_str(if self.converged { "converged true\n" } else { "converged false\n" });
        out
    }
}

/// Runs up to `config.epochs` epochs, stopping early once the bound on a
/// fixed monitoring sample plateaus (relative change below `elbo_tol`) for
/// three consecutive epochs.
pub fn fit(
    graph: &EntityGraph,
    cooc: &CoOccurrenceData,
    relations: &[RelationData],
    config: &TrainConfig,
) -> Result<(ModelState, TrainingLog), FitError> {
    config.validate()?;
    let partition = crate::graph::partition(graph);
    let mut state = initialize(graph, relations, config);
    let mut log = TrainingLog::default();
    if config.epochs == 0 {
        return Ok((state, log));
    }

    let monitor = build_epoch_dataset(cooc, relations, config.neg_ratio, config.subsample_rho, config.seed, MONITOR_EPOCH)?;
    let pool = if config.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .expect("thread pool construction"),
        )
    } else {
        None
    };

    let mut plateau = 0u32;
    let mut prev_bound: Option<f64> = None;
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let data = build_epoch_dataset(cooc, relations, config.neg_ratio, config.subsample_rho, config.seed, u64::from(epoch))?;
        train_epoch_with_data(&mut state, graph, &partition, &data, config.alpha, config.beta, pool.as_ref());
        let bound = elbo(&state, graph, &monitor, config.alpha, config.beta)?;
        let rel_weight: u64 = data.rel.iter().map(|p| p.weight()).sum();
        log.records.push(EpochRecord {
            epoch,
            elbo: bound,
            seconds: start.elapsed().as_secs_f64(),
            cooc_weight: data.cooc.weight(),
            rel_weight,
        });
        if let Some(prev) = prev_bound {
            let rel_change = (bound - prev).abs() / prev.abs().max(1e-12);
            if rel_change < config.elbo_tol {
                plateau += 1;
            } else {
                plateau = 0;
            }
        }
        prev_bound = Some(bound);
        if plateau >= 3 {
            log.converged = true;
            break;
        }
    }
    Ok((state, log))
}
