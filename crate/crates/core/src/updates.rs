//! Closed-form coordinate updates over the model state.
//!
//! Every update writes exactly one factor while reading others; under the
//! partition discipline (and sequentially over map columns) concurrent
//! execution within a phase is byte-identical to sequential execution.
//!
//! Factors are diagonal Gaussians. Each vector update keeps the diagonal of
//! the full pair-term precision and extracts its mean by solving the full
//! normal equations matrix-free (diagonal plus per-pair low-rank structure,
//! conjugate gradients), so the returned factor is the exact maximizer of the
//! bounded objective in its coordinate and the trainer's bound never
//! decreases. The off-diagonal precision is applied on the fly, never stored.

use crate::factors::{
    expected_sq_dot, jaakkola_lambda, mean_quadratic, second_moment_diag, GammaFactor,
    GaussianFactor,
};
use crate::graph::{EntityGraph, NodeId};
use crate::sampling::{EpochDataset, LabeledPairs};

/// Representation side: context (`U`) or target (`V`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    U,
    V,
}

/// Which half of a relation's low-rank map a column update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSide {
    X,
    Y,
}

/// Pair stream a variational parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Cooc,
    Rel(usize),
}

/// Target of a precision (Gamma) update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaTarget {
    U(u32),
    V(u32),
    Hu(u32),
    Hv(u32),
    X(usize, usize),
    Y(usize, usize),
    B(u32),
    R(usize, u32),
}

/// The complete set of variational factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dim: usize,
    /// Context and target leaf factors, one per leaf entity.
    pub u: Vec<GaussianFactor>,
    pub v: Vec<GaussianFactor>,
    /// Category factors, one per category node and side.
    pub hu: Vec<GaussianFactor>,
    pub hv: Vec<GaussianFactor>,
    /// Scalar co-occurrence bias per leaf entity.
    pub b: Vec<GaussianFactor>,
    /// Scalar relation bias per `[relation][leaf]`.
    pub r: Vec<Vec<GaussianFactor>>,
    /// Low-rank map columns per `[relation][column]`.
    pub x: Vec<Vec<GaussianFactor>>,
    pub y: Vec<Vec<GaussianFactor>>,
    pub tau_u: Vec<GammaFactor>,
    pub tau_v: Vec<GammaFactor>,
    pub tau_hu: Vec<GammaFactor>,
    pub tau_hv: Vec<GammaFactor>,
    pub tau_b: Vec<GammaFactor>,
    pub tau_r: Vec<Vec<GammaFactor>>,
    pub tau_x: Vec<Vec<GammaFactor>>,
    pub tau_y: Vec<Vec<GammaFactor>>,
}

impl ModelState {
    pub fn n_relations(&self) -> usize {
        self.x.len()
    }

    pub fn relation_rank(&self, k: usize) -> usize {
        self.x[k].len()
    }

    pub fn leaf(&self, side: Side, i: u32) -> &GaussianFactor {
        match side {
            Side::U => &self.u[i as usize],
            Side::V => &self.v[i as usize],
        }
    }

    pub fn parent(&self, side: Side, c: u32) -> &GaussianFactor {
        match side {
            Side::U => &self.hu[c as usize],
            Side::V => &self.hv[c as usize],
        }
    }

    /// Diagonal of the expected mapped outer product for relation `k` applied
    /// to a `v`-side factor (or the transposed map for the `u` side).
    pub fn diag_expected_wvvw(&self, k: usize, f: &GaussianFactor) -> Vec<f64> {
        diag_expected_wvvw(&self.x[k], &self.y[k], f)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean map applied to a vector: sum_m mu_{x_m} (mu_{y_m} . rhs).
pub(crate) fn mean_map_apply(x_cols: &[GaussianFactor], y_cols: &[GaussianFactor], rhs: &[f64]) -> Vec<f64> {
    let t = rhs.len();
    let mut out = vec![0.0; t];
    for (xm, ym) in x_cols.iter().zip(y_cols) {
        let d = dot(ym.mean(), rhs);
        for k in 0..t {
            out[k] += xm.mean()[k] * d;
        }
    }
    out
}

/// mu_u^T M mu_v through the column means.
pub(crate) fn mean_bilinear(
    u: &GaussianFactor,
    x_cols: &[GaussianFactor],
    y_cols: &[GaussianFactor],
    v: &GaussianFactor,
) -> f64 {
    x_cols
        .iter()
        .zip(y_cols)
        .map(|(xm, ym)| dot(u.mean(), xm.mean()) * dot(ym.mean(), v.mean()))
        .sum()
}

/// Diagonal of E[W v v^T W^T] for a low-rank map with columns `x_cols`,
/// `y_cols`: per-column terms E[(y_m.v)^2] E[x_m x_m^T] plus cross-column
/// terms through the column means and E[v v^T]; only diagonal entries are
/// accumulated.
pub fn diag_expected_wvvw(
    x_cols: &[GaussianFactor],
    y_cols: &[GaussianFactor],
    v: &GaussianFactor,
) -> Vec<f64> {
    let t = v.dim();
    let rank = x_cols.len();
    let mut out = vec![0.0; t];
    for m in 0..rank {
        let q_m = expected_sq_dot(&y_cols[m], v).expect("map column dimension");
        let sm = second_moment_diag(&x_cols[m]);
        for d in 0..t {
            out[d] += q_m * sm[d];
        }
    }
    for m in 0..rank {
        for n in 0..rank {
            if m == n {
                continue;
            }
            let c_mn = mean_quadratic(v, &y_cols[m], &y_cols[n]);
            for d in 0..t {
                out[d] += c_mn * x_cols[m].mean()[d] * x_cols[n].mean()[d];
            }
        }
    }
    out
}

/// Exact E[(u^T W v)^2] under the factorized posterior: per-column products
/// of quadratic expectations plus cross-column mean terms.
pub fn expected_sq_bilinear(
    u: &GaussianFactor,
    v: &GaussianFactor,
    x_cols: &[GaussianFactor],
    y_cols: &[GaussianFactor],
) -> f64 {
    let rank = x_cols.len();
    let mut acc = 0.0;
    for m in 0..rank {
        acc += expected_sq_dot(u, &x_cols[m]).expect("map column dimension")
            * expected_sq_dot(&y_cols[m], v).expect("map column dimension");
    }
    for m in 0..rank {
        for n in 0..rank {
            if m != n {
                acc += mean_quadratic(u, &x_cols[m], &x_cols[n])
                    * mean_quadratic(v, &y_cols[m], &y_cols[n]);
            }
        }
    }
    acc
}

/// Mean and second moment of the score of pair `(i, j)`.
pub(crate) fn pair_moments(i: u32, j: u32, kind: PairKind, state: &ModelState) -> (f64, f64) {
    let u = &state.u[i as usize];
    let v = &state.v[j as usize];
    match kind {
        PairKind::Cooc => {
            let b = &state.b[j as usize];
            let mean_dot = dot(u.mean(), v.mean());
            let mean = mean_dot + b.mean_scalar();
            let s = expected_sq_dot(u, v).expect("pair dimension")
                + 2.0 * b.mean_scalar() * mean_dot
                + b.second_moment_scalar();
            (mean, s)
        }
        PairKind::Rel(k) => {
            let r = &state.r[k][j as usize];
            let bil = mean_bilinear(u, &state.x[k], &state.y[k], v);
            let mean = bil + r.mean_scalar();
            let s = expected_sq_bilinear(u, v, &state.x[k], &state.y[k])
                + 2.0 * r.mean_scalar() * bil
                + r.second_moment_scalar();
            (mean, s)
        }
    }
}

/// The variational parameter of one pair, recomputed on demand from current
/// moments: the square root of the score's second moment.
pub fn update_variational(i: u32, j: u32, kind: PairKind, state: &ModelState) -> f64 {
    let (mean, s) = pair_moments(i, j, kind, state);
    assert!(s.is_finite(), "non-finite pair second moment for ({i}, {j}, {kind:?})");
    // The second moment is nonnegative analytically; anything beyond
    // cancellation noise signals a moment bug.
    assert!(
        s >= -1e-7 * (1.0 + mean * mean),
        "negative pair second moment {s} for ({i}, {j}, {kind:?})"
    );
    s.max(0.0).sqrt()
}

/// One low-rank quadratic block of a pair-term precision: scale times
/// (cols G cols^T + diag), where G couples the column means.
struct QuadBlock {
    scale: f64,
    cols: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
}

/// The full precision operator of one vector coordinate: `diag` plus the
/// low-rank pair blocks. Only its action and diagonal are ever materialized.
struct QuadOperator {
    diag: Vec<f64>,
    blocks: Vec<QuadBlock>,
}

impl QuadOperator {
    fn new(dim: usize, prior_precision: f64) -> Self {
        QuadOperator { diag: vec![prior_precision; dim], blocks: Vec::new() }
    }

    /// Adds scale * (sum_{m,n} G_mn col_m col_n^T + diag(extra)).
    fn add_block(&mut self, scale: f64, cols: Vec<Vec<f64>>, gram: Vec<Vec<f64>>, extra_diag: &[f64]) {
        for (d, e) in extra_diag.iter().enumerate() {
            self.diag[d] += scale * e;
        }
        self.blocks.push(QuadBlock { scale, cols, gram });
    }

    fn apply(&self, z: &[f64], out: &mut [f64]) {
        for d in 0..z.len() {
            out[d] = self.diag[d] * z[d];
        }
        for block in &self.blocks {
            let rank = block.cols.len();
            let dots: Vec<f64> = block.cols.iter().map(|c| dot(c, z)).collect();
            for m in 0..rank {
                let mixed: f64 = (0..rank).map(|n| block.gram[m][n] * dots[n]).sum();
                let w = block.scale * mixed;
                for d in 0..z.len() {
                    out[d] += w * block.cols[m][d];
                }
            }
        }
    }

    /// The diagonal of the full operator (the stored precision).
    fn diagonal(&self) -> Vec<f64> {
        let mut diag = self.diag.clone();
        for block in &self.blocks {
            let rank = block.cols.len();
            for m in 0..rank {
                for n in 0..rank {
                    let g = block.scale * block.gram[m][n];
                    for d in 0..diag.len() {
                        diag[d] += g * block.cols[m][d] * block.cols[n][d];
                    }
                }
            }
        }
        diag
    }

    /// Solves A x = b by conjugate gradients from a diagonally preconditioned
    /// start. A is symmetric positive definite by construction.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let t = b.len();
        let diag_a = self.diagonal();
        let mut x: Vec<f64> = b.iter().zip(&diag_a).map(|(bi, di)| bi / di).collect();
        let mut az = vec![0.0; t];
        self.apply(&x, &mut az);
        let mut r: Vec<f64> = b.iter().zip(&az).map(|(bi, ai)| bi - ai).collect();
        let b_norm = dot(b, b).sqrt();
        let tol = 1e-13 * b_norm.max(1e-300);
        let mut p = r.clone();
        let mut rs = dot(&r, &r);
        // Exact convergence needs at most one step per distinct eigenvalue;
        // the generous cap covers rounding.
        for _ in 0..(4 * t + 16) {
            if rs.sqrt() <= tol {
                break;
            }
            self.apply(&p, &mut az);
            let denom = dot(&p, &az);
            if denom <= 0.0 {
                break;
            }
            let alpha = rs / denom;
            for d in 0..t {
                x[d] += alpha * p[d];
                r[d] -= alpha * az[d];
            }
            let rs_next = dot(&r, &r);
            let beta = rs_next / rs;
            rs = rs_next;
            for d in 0..t {
                p[d] = r[d] + beta * p[d];
            }
        }
        x
    }
}

/// Gram matrix coupling a relation map's column means for one pair:
/// G_mm = E[(y_m.v)^2], G_mn = mu_{y_m}^T E[v v^T] mu_{y_n}. Positive
/// semidefinite (mean Gram plus a nonnegative diagonal).
fn map_gram(y_cols: &[GaussianFactor], v: &GaussianFactor) -> Vec<Vec<f64>> {
    let rank = y_cols.len();
    let mut gram = vec![vec![0.0; rank]; rank];
    for m in 0..rank {
        for n in 0..rank {
            gram[m][n] = if m == n {
                expected_sq_dot(&y_cols[m], v).expect("map column dimension")
            } else {
                mean_quadratic(v, &y_cols[m], &y_cols[n])
            };
        }
    }
    gram
}

/// Updates the leaf factor of entity `i` on `side` from its prior and every
/// incident pair of the epoch.
pub fn update_leaf(
    i: u32,
    side: Side,
    state: &ModelState,
    graph: &EntityGraph,
    epoch: &EpochDataset,
) -> GaussianFactor {
    let t = state.dim;
    let tau_mean = match side {
        Side::U => state.tau_u[i as usize].mean(),
        Side::V => state.tau_v[i as usize].mean(),
    };
    let mut op = QuadOperator::new(t, tau_mean);
    let mut rhs = vec![0.0; t];

    let parent_cats = graph.leaf_parents(i);
    if !parent_cats.is_empty() {
        let inv = 1.0 / parent_cats.len() as f64;
        for &c in parent_cats {
            let h = state.parent(side, c);
            for d in 0..t {
                rhs[d] += tau_mean * inv * h.mean()[d];
            }
        }
    }

    let cooc_pairs: Vec<(u32, u32, i8, u32)> = match side {
        Side::U => epoch.cooc.with_left(i).collect(),
        Side::V => epoch.cooc.with_right(i).collect(),
    };
    for (pi, pj, label, count) in cooc_pairs {
        let partner = match side {
            Side::U => &state.v[pj as usize],
            Side::V => &state.u[pi as usize],
        };
        let bias_mean = state.b[pj as usize].mean_scalar();
        let xi = update_variational(pi, pj, PairKind::Cooc, state);
        let lam = jaakkola_lambda(xi);
        let w = f64::from(count);
        op.add_block(
            2.0 * w * lam,
            vec![partner.mean().to_vec()],
            vec![vec![1.0]],
            &partner.variance_diag(),
        );
        let coef = 0.5 * w * (f64::from(label) - 4.0 * lam * bias_mean);
        for d in 0..t {
            rhs[d] += coef * partner.mean()[d];
        }
    }

    // A dataset may carry fewer relation streams than the state declares;
    // missing streams contribute nothing.
    for k in 0..state.n_relations().min(epoch.rel.len()) {
        let rel_pairs: Vec<(u32, u32, i8, u32)> = match side {
            Side::U => epoch.rel[k].with_left(i).collect(),
            Side::V => epoch.rel[k].with_right(i).collect(),
        };
        if rel_pairs.is_empty() {
            continue;
        }
        // The v side sees the transposed map: columns swap roles.
        let (x_cols, y_cols) = match side {
            Side::U => (&state.x[k], &state.y[k]),
            Side::V => (&state.y[k], &state.x[k]),
        };
        for (pi, pj, label, count) in rel_pairs {
            let partner = match side {
                Side::U => &state.v[pj as usize],
                Side::V => &state.u[pi as usize],
            };
            let r_mean = state.r[k][pj as usize].mean_scalar();
            let zeta = update_variational(pi, pj, PairKind::Rel(k), state);
            let lam = jaakkola_lambda(zeta);
            let w = f64::from(count);

            // E[W v v^T W^T] = cols G cols^T + sum_m E[(y_m.v)^2] diag(var x_m).
            let gram = map_gram(y_cols, partner);
            let mut extra = vec![0.0; t];
            for (m, xm) in x_cols.iter().enumerate() {
                for d in 0..t {
                    extra[d] += gram[m][m] * xm.variance(d);
                }
            }
            let cols: Vec<Vec<f64>> = x_cols.iter().map(|c| c.mean().to_vec()).collect();
            op.add_block(2.0 * w * lam, cols, gram, &extra);

            let mapped = mean_map_apply(x_cols, y_cols, partner.mean());
            let coef = 0.5 * w * (f64::from(label) - 4.0 * lam * r_mean);
            for d in 0..t {
                rhs[d] += coef * mapped[d];
            }
        }
    }

    let mean = op.solve(&rhs);
    GaussianFactor::new(mean, op.diagonal())
}

/// Updates the category factor of category node `c` on `side` from its own
/// parents and the pull of its children, subtracting co-parent means. The
/// precision is isotropic, so the mean extraction is a plain division.
pub fn update_parent(c: u32, side: Side, state: &ModelState, graph: &EntityGraph) -> GaussianFactor {
    let t = state.dim;
    let own_tau = match side {
        Side::U => state.tau_hu[c as usize].mean(),
        Side::V => state.tau_hv[c as usize].mean(),
    };

    let mut precision_scalar = own_tau;
    let mut numer = vec![0.0; t];

    let own_parents = graph.cat_parents(c);
    if !own_parents.is_empty() {
        let inv = 1.0 / own_parents.len() as f64;
        for &p in own_parents {
            let h = state.parent(side, p);
            for d in 0..t {
                numer[d] += own_tau * inv * h.mean()[d];
            }
        }
    }

    for &child in graph.cat_children(c) {
        let (child_tau, child_factor, n_parents) = match child {
            NodeId::Leaf(m) => {
                let tau = match side {
                    Side::U => state.tau_u[m as usize].mean(),
                    Side::V => state.tau_v[m as usize].mean(),
                };
                (tau, state.leaf(side, m), graph.leaf_parents(m).len())
            }
            NodeId::Cat(m) => {
                let tau = match side {
                    Side::U => state.tau_hu[m as usize].mean(),
                    Side::V => state.tau_hv[m as usize].mean(),
                };
                (tau, state.parent(side, m), graph.cat_parents(m).len())
            }
        };
        let inv = 1.0 / n_parents as f64;
        precision_scalar += child_tau * inv * inv;
        for d in 0..t {
            numer[d] += child_tau * inv * child_factor.mean()[d];
        }
        for &other in graph.parents(child) {
            if other == c {
                continue;
            }
            let h = state.parent(side, other);
            for d in 0..t {
                numer[d] -= child_tau * inv * inv * h.mean()[d];
            }
        }
    }

    let mean = numer.iter().map(|n| n / precision_scalar).collect();
    GaussianFactor::new(mean, vec![precision_scalar; t])
}

/// Updates one column of a relation's low-rank map.
pub fn update_relation_map(
    m: usize,
    k: usize,
    side: MapSide,
    state: &ModelState,
    epoch: &EpochDataset,
) -> GaussianFactor {
    let t = state.dim;
    let tau_mean = match side {
        MapSide::X => state.tau_x[k][m].mean(),
        MapSide::Y => state.tau_y[k][m].mean(),
    };
    let mut op = QuadOperator::new(t, tau_mean);
    let mut rhs = vec![0.0; t];
    let rank = state.relation_rank(k);
    let empty = LabeledPairs::default();
    let stream = epoch.rel.get(k).unwrap_or(&empty);

    for &(i, j, label, count) in &stream.pairs {
        let u = &state.u[i as usize];
        let v = &state.v[j as usize];
        let r_mean = state.r[k][j as usize].mean_scalar();
        let zeta = update_variational(i, j, PairKind::Rel(k), state);
        let lam = jaakkola_lambda(zeta);
        let w = f64::from(count);

        // `near` is the leaf factor the updated column contracts with, `far`
        // the one its partner column contracts with.
        let (near, far, own_cols, other_cols) = match side {
            MapSide::X => (u, v, &state.x[k], &state.y[k]),
            MapSide::Y => (v, u, &state.y[k], &state.x[k]),
        };

        // Quadratic term: E[(far . other_m)^2] E[near near^T].
        let q_m = expected_sq_dot(&other_cols[m], far).expect("map column dimension");
        op.add_block(
            2.0 * w * lam * q_m,
            vec![near.mean().to_vec()],
            vec![vec![1.0]],
            &near.variance_diag(),
        );

        let far_dot = dot(other_cols[m].mean(), far.mean());
        let coef = 0.5 * w * (f64::from(label) - 4.0 * lam * r_mean);
        for d in 0..t {
            rhs[d] += coef * far_dot * near.mean()[d];
        }

        // Cross-column pull: current means of the other columns through
        // E[near near^T] and the far-side mean quadratic.
        for n in 0..rank {
            if n == m {
                continue;
            }
            let c_mn = mean_quadratic(far, &other_cols[m], &other_cols[n]);
            let near_dot = dot(near.mean(), own_cols[n].mean());
            for d in 0..t {
                let e_nn = near.mean()[d] * near_dot + near.variance(d) * own_cols[n].mean()[d];
                rhs[d] -= 2.0 * w * lam * c_mn * e_nn;
            }
        }
    }

    let mean = op.solve(&rhs);
    GaussianFactor::new(mean, op.diagonal())
}

/// Updates the scalar co-occurrence bias of entity `j`.
pub fn update_bias(j: u32, state: &ModelState, epoch: &EpochDataset) -> GaussianFactor {
    let mut precision = state.tau_b[j as usize].mean();
    let mut pre_mean = 0.0;
    for (i, _, label, count) in epoch.cooc.with_right(j) {
        let xi = update_variational(i, j, PairKind::Cooc, state);
        let lam = jaakkola_lambda(xi);
        let w = f64::from(count);
        let mean_dot = dot(state.u[i as usize].mean(), state.v[j as usize].mean());
        precision += 2.0 * w * lam;
        pre_mean += 0.5 * w * (f64::from(label) - 4.0 * lam * mean_dot);
    }
    GaussianFactor::scalar(pre_mean / precision, precision)
}

/// Updates the scalar bias of entity `j` under relation `k`.
pub fn update_relation_bias(j: u32, k: usize, state: &ModelState, epoch: &EpochDataset) -> GaussianFactor {
    let mut precision = state.tau_r[k][j as usize].mean();
    let mut pre_mean = 0.0;
    let empty = LabeledPairs::default();
    let stream = epoch.rel.get(k).unwrap_or(&empty);
    for (i, _, label, count) in stream.with_right(j) {
        let zeta = update_variational(i, j, PairKind::Rel(k), state);
        let lam = jaakkola_lambda(zeta);
        let w = f64::from(count);
        let bil = mean_bilinear(&state.u[i as usize], &state.x[k], &state.y[k], &state.v[j as usize]);
        precision += 2.0 * w * lam;
        pre_mean += 0.5 * w * (f64::from(label) - 4.0 * lam * bil);
    }
    GaussianFactor::scalar(pre_mean / precision, precision)
}

/// Conjugate Gamma update for one precision variable: shape gains half the
/// target's dimension, rate gains half its expected squared deviation from
/// the prior mean.
pub fn update_gamma(
    target: GammaTarget,
    state: &ModelState,
    graph: &EntityGraph,
    alpha: f64,
    beta: f64,
) -> GammaFactor {
    let parents_of = |side: Side, cats: &[u32]| -> Vec<&GaussianFactor> {
        cats.iter().map(|&c| state.parent(side, c)).collect()
    };
    let (dim, deviation) = match target {
        GammaTarget::U(i) => {
            let parents = parents_of(Side::U, graph.leaf_parents(i));
            (state.dim, crate::factors::expected_sq_norm_diff(&state.u[i as usize], &parents))
        }
        GammaTarget::V(i) => {
            let parents = parents_of(Side::V, graph.leaf_parents(i));
            (state.dim, crate::factors::expected_sq_norm_diff(&state.v[i as usize], &parents))
        }
        GammaTarget::Hu(c) => {
            let parents = parents_of(Side::U, graph.cat_parents(c));
            (state.dim, crate::factors::expected_sq_norm_diff(&state.hu[c as usize], &parents))
        }
        GammaTarget::Hv(c) => {
            let parents = parents_of(Side::V, graph.cat_parents(c));
            (state.dim, crate::factors::expected_sq_norm_diff(&state.hv[c as usize], &parents))
        }
        GammaTarget::X(k, m) => (state.dim, state.x[k][m].expected_sq_norm()),
        GammaTarget::Y(k, m) => (state.dim, state.y[k][m].expected_sq_norm()),
        GammaTarget::B(i) => (1, state.b[i as usize].second_moment_scalar()),
        GammaTarget::R(k, i) => (1, state.r[k][i as usize].second_moment_scalar()),
    };
    GammaFactor::new(alpha + dim as f64 / 2.0, beta + 0.5 * deviation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::GammaFactor;
    use approx::assert_abs_diff_eq;

    const TWO_LAMBDA_1: f64 = 0.231_058_578_630_004_9; // 2 * lambda(1)

    fn empty_epoch() -> EpochDataset {
        EpochDataset::default()
    }

    fn graph_no_hierarchy(n: usize) -> EntityGraph {
        let names: Vec<String> = (0..n).map(|i| format!("e{i:02}")).collect();
        EntityGraph::build(&names, &[]).unwrap()
    }

    /// An n-entity state with one relation of the given rank, everything at
    /// the prior fixed point unless overridden by the test.
    fn base_state(n: usize, dim: usize, rank: usize) -> ModelState {
        let gauss = |_: usize| GaussianFactor::standard(dim);
        ModelState {
            dim,
            u: (0..n).map(gauss).collect(),
            v: (0..n).map(gauss).collect(),
            hu: Vec::new(),
            hv: Vec::new(),
            b: (0..n).map(|_| GaussianFactor::standard(1)).collect(),
            r: vec![(0..n).map(|_| GaussianFactor::standard(1)).collect()],
            x: vec![(0..rank).map(gauss).collect()],
            y: vec![(0..rank).map(gauss).collect()],
            tau_u: (0..n).map(|_| GammaFactor::new(1.0, 1.0)).collect(),
            tau_v: (0..n).map(|_| GammaFactor::new(1.0, 1.0)).collect(),
            tau_hu: Vec::new(),
            tau_hv: Vec::new(),
            tau_b: (0..n).map(|_| GammaFactor::new(1.0, 1.0)).collect(),
            tau_r: vec![(0..n).map(|_| GammaFactor::new(1.0, 1.0)).collect()],
            tau_x: vec![(0..rank).map(|_| GammaFactor::new(1.0, 1.0)).collect()],
            tau_y: vec![(0..rank).map(|_| GammaFactor::new(1.0, 1.0)).collect()],
        }
    }

    fn labeled(pairs: Vec<(u32, u32, i8, u32)>) -> LabeledPairs {
        LabeledPairs::from_pairs(pairs)
    }

    fn cooc_epoch(pairs: Vec<(u32, u32, i8, u32)>) -> EpochDataset {
        EpochDataset { cooc: labeled(pairs), rel: Vec::new() }
    }

    fn rel_epoch(k_pairs: Vec<(u32, u32, i8, u32)>) -> EpochDataset {
        EpochDataset { cooc: labeled(Vec::new()), rel: vec![labeled(k_pairs)] }
    }

    #[test]
    fn leaf_update_prior_fallback() {
        let state = base_state(2, 2, 1);
        let g = graph_no_hierarchy(2);
        let f = update_leaf(0, Side::U, &state, &g, &empty_epoch());
        assert_eq!(f.precision_diag(), &[1.0, 1.0]);
        assert_eq!(f.mean(), &[0.0, 0.0]);
    }

    #[test]
    fn leaf_update_single_positive_pair() {
        let mut state = base_state(2, 2, 1);
        state.v[1] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.b[1] = GaussianFactor::deterministic(vec![0.0]);
        let g = graph_no_hierarchy(2);
        let epoch = cooc_epoch(vec![(0, 1, 1, 1)]);

        let xi = update_variational(0, 1, PairKind::Cooc, &state);
        assert_abs_diff_eq!(xi, 1.0, epsilon = 1e-6);

        let f = update_leaf(0, Side::U, &state, &g, &epoch);
        assert_abs_diff_eq!(f.precision_diag()[0], 1.0 + TWO_LAMBDA_1, epsilon = 1e-6);
        assert_abs_diff_eq!(f.precision_diag()[1], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f.mean()[0], 0.5 / (1.0 + TWO_LAMBDA_1), epsilon = 1e-6);
        assert_abs_diff_eq!(f.mean()[0], 0.406_153_8, epsilon = 1e-6);
        assert_abs_diff_eq!(f.mean()[1], 0.0, epsilon = 1e-9);

        // Cross-check against a direct maximizer of the bounded objective in
        // this coordinate (fixed xi): f must locally maximize it.
        let objective = |mean0: f64, prec0: f64| {
            let lam = jaakkola_lambda(1.0);
            let e_sq = mean0 * mean0 + 1.0 / prec0;
            // data term + own prior + entropy, dimension 0 only
            0.5 * mean0 - lam * e_sq - 0.5 * e_sq + 0.5 * (1.0 / prec0).ln()
        };
        let best = objective(f.mean()[0], f.precision_diag()[0]);
        for dm in [-1e-4, 1e-4] {
            for dp in [-1e-4, 1e-4] {
                let perturbed = objective(f.mean()[0] + dm, f.precision_diag()[0] + dp);
                assert!(perturbed <= best + 1e-12, "{perturbed} > {best}");
            }
        }
    }

    #[test]
    fn leaf_update_centers_on_parent_mean() {
        let g = EntityGraph::build(&["a", "b"], &[("a", "top")]).unwrap();
        let a = g.leaf_id("a").unwrap();
        let mut state = base_state(2, 2, 1);
        state.hu = vec![GaussianFactor::deterministic(vec![3.0, 3.0])];
        state.hv = vec![GaussianFactor::deterministic(vec![3.0, 3.0])];
        state.tau_hu = vec![GammaFactor::new(1.0, 1.0)];
        state.tau_hv = vec![GammaFactor::new(1.0, 1.0)];
        state.tau_u[a as usize] = GammaFactor::new(2.0, 1.0);
        let f = update_leaf(a, Side::U, &state, &g, &empty_epoch());
        assert_eq!(f.precision_diag(), &[2.0, 2.0]);
        assert_abs_diff_eq!(f.mean()[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.mean()[1], 3.0, epsilon = 1e-9);
    }

    /// With a non-axis-aligned partner the full precision couples the
    /// dimensions; the solved mean must maximize the coordinate objective,
    /// unlike an elementwise division by the stored diagonal.
    #[test]
    fn leaf_update_mean_solves_the_coupled_system() {
        let mut state = base_state(2, 2, 1);
        state.v[1] = GaussianFactor::deterministic(vec![1.0, 1.0]);
        state.b[1] = GaussianFactor::deterministic(vec![0.0]);
        let g = graph_no_hierarchy(2);
        let epoch = cooc_epoch(vec![(0, 1, 1, 1)]);

        let xi = update_variational(0, 1, PairKind::Cooc, &state);
        let lam = jaakkola_lambda(xi);
        let f = update_leaf(0, Side::U, &state, &g, &epoch);

        // A = I + 2 lam (mu_v mu_v^T); b = mu_v / 2. Solve analytically.
        let a_on = 1.0 + 2.0 * lam;
        let a_off = 2.0 * lam;
        let det = a_on * a_on - a_off * a_off;
        let expected = (0.5 * a_on - 0.5 * a_off) / det;
        assert_abs_diff_eq!(f.mean()[0], expected, epsilon = 1e-9);
        assert_abs_diff_eq!(f.mean()[1], expected, epsilon = 1e-9);
        // The stored precision is the diagonal of the full system.
        assert_abs_diff_eq!(f.precision_diag()[0], a_on, epsilon = 1e-6);
    }

    #[test]
    fn sides_are_symmetric_under_orientation_swap() {
        let mut state = base_state(3, 2, 1);
        state.u[2] = GaussianFactor::new(vec![0.3, -0.8], vec![2.0, 1.5]);
        state.v[2] = state.u[2].clone();
        state.b[1] = GaussianFactor::deterministic(vec![0.0]);
        state.b[0] = GaussianFactor::deterministic(vec![0.0]);
        let g = graph_no_hierarchy(3);

        // (0, 1) on the u side must equal (1, 0) on the v side when the
        // opposing factors match and biases are pinned at zero.
        let epoch_left = cooc_epoch(vec![(0, 1, 1, 2)]);
        let epoch_right = cooc_epoch(vec![(1, 0, 1, 2)]);
        let mut swapped = state.clone();
        swapped.u[1] = state.v[1].clone();
        swapped.v[0] = state.u[0].clone();
        swapped.v[1] = state.u[1].clone();
        swapped.u[0] = state.v[0].clone();
        let fu = update_leaf(0, Side::U, &state, &g, &epoch_left);
        let fv = update_leaf(0, Side::V, &swapped, &g, &epoch_right);
        assert_eq!(fu, fv);
    }

    #[test]
    fn diag_wvvw_examples() {
        // Deterministic rank-1: diag = ((y.v)^2 x_1^2, (y.v)^2 x_2^2).
        let x = vec![GaussianFactor::deterministic(vec![1.0, 0.0])];
        let y = vec![GaussianFactor::deterministic(vec![1.0, 0.0])];
        let v = GaussianFactor::deterministic(vec![1.0, 0.0]);
        let d = diag_expected_wvvw(&x, &y, &v);
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-6);

        // Stochastic y with zero mean: E[(y.v)^2] = 1.
        let y = vec![GaussianFactor::standard(2)];
        let d = diag_expected_wvvw(&x, &y, &v);
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-6);

        // Zero deterministic map: zero diagonal.
        let x = vec![GaussianFactor::deterministic(vec![0.0, 0.0]); 2];
        let y = vec![GaussianFactor::deterministic(vec![0.0, 0.0]); 2];
        let d = diag_expected_wvvw(&x, &y, &v);
        assert!(d.iter().all(|&e| e.abs() < 1e-7));
    }

    #[test]
    fn relation_map_update_prior_fallback() {
        let state = base_state(2, 2, 1);
        let f = update_relation_map(0, 0, MapSide::X, &state, &rel_epoch(Vec::new()));
        assert_eq!(f.precision_diag(), &[1.0, 1.0]);
        assert_eq!(f.mean(), &[0.0, 0.0]);
    }

    #[test]
    fn relation_map_update_mirrors_leaf_example() {
        let mut state = base_state(2, 2, 1);
        state.u[0] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.v[1] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.y[0][0] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.r[0][1] = GaussianFactor::deterministic(vec![0.0]);
        let epoch = rel_epoch(vec![(0, 1, 1, 1)]);

        let zeta = update_variational(0, 1, PairKind::Rel(0), &state);
        assert_abs_diff_eq!(zeta, 1.0, epsilon = 1e-6);

        let f = update_relation_map(0, 0, MapSide::X, &state, &epoch);
        assert_abs_diff_eq!(f.precision_diag()[0], 1.0 + TWO_LAMBDA_1, epsilon = 1e-6);
        assert_abs_diff_eq!(f.precision_diag()[1], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f.mean()[0], 0.406_153_8, epsilon = 1e-6);
        assert_abs_diff_eq!(f.mean()[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn relation_map_zero_second_column_reduces_to_rank_one() {
        let mut rank1 = base_state(2, 2, 1);
        rank1.u[0] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        rank1.v[1] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        rank1.y[0][0] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        rank1.r[0][1] = GaussianFactor::deterministic(vec![0.0]);

        let mut rank2 = base_state(2, 2, 2);
        rank2.u[0] = rank1.u[0].clone();
        rank2.v[1] = rank1.v[1].clone();
        rank2.x[0][0] = rank1.x[0][0].clone();
        rank2.y[0][0] = rank1.y[0][0].clone();
        rank2.x[0][1] = GaussianFactor::deterministic(vec![0.0, 0.0]);
        rank2.y[0][1] = GaussianFactor::deterministic(vec![0.0, 0.0]);
        rank2.r[0][1] = GaussianFactor::deterministic(vec![0.0]);

        let f1 = update_relation_map(0, 0, MapSide::X, &rank1, &rel_epoch(vec![(0, 1, 1, 1)]));
        let f2 = update_relation_map(0, 0, MapSide::X, &rank2, &rel_epoch(vec![(0, 1, 1, 1)]));
        for d in 0..2 {
            assert_abs_diff_eq!(f1.mean()[d], f2.mean()[d], epsilon = 1e-6);
            assert_abs_diff_eq!(f1.precision_diag()[d], f2.precision_diag()[d], epsilon = 1e-5);
        }
    }

    #[test]
    fn variational_parameter_examples() {
        let mut state = base_state(2, 2, 1);
        state.u[0] = GaussianFactor::deterministic(vec![0.0, 0.0]);
        state.v[1] = GaussianFactor::deterministic(vec![0.0, 0.0]);
        state.b[1] = GaussianFactor::deterministic(vec![0.0]);
        assert_abs_diff_eq!(update_variational(0, 1, PairKind::Cooc, &state), 0.0, epsilon = 1e-3);

        state.u[0] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.v[1] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        assert_abs_diff_eq!(update_variational(0, 1, PairKind::Cooc, &state), 1.0, epsilon = 1e-4);

        state.u[0] = GaussianFactor::new(vec![1.0, 0.0], vec![2.0, 2.0]);
        state.v[1] = GaussianFactor::new(vec![0.0, 1.0], vec![4.0, 4.0]);
        state.b[1] = GaussianFactor::scalar(0.0, 10.0);
        assert_abs_diff_eq!(
            update_variational(0, 1, PairKind::Cooc, &state),
            1.1f64.sqrt(),
            epsilon = 1e-7
        );
    }

    #[test]
    fn parent_update_examples() {
        // Root with a single leaf child at its prior.
        let g = EntityGraph::build(&["c"], &[("c", "h")]).unwrap();
        let mut state = base_state(1, 2, 1);
        state.hu = vec![GaussianFactor::standard(2)];
        state.hv = vec![GaussianFactor::standard(2)];
        state.tau_hu = vec![GammaFactor::new(1.0, 1.0)];
        state.tau_hv = vec![GammaFactor::new(1.0, 1.0)];
        state.u[0] = GaussianFactor::deterministic(vec![2.0, 0.0]);
        let f = update_parent(0, Side::U, &state, &g);
        assert_eq!(f.precision_diag(), &[2.0, 2.0]);
        assert_abs_diff_eq!(f.mean()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.mean()[1], 0.0, epsilon = 1e-12);

        // Category with no children and one pinned parent: pure prior.
        let g = crate::graph::EntityGraph::raw_for_tests(
            0,
            vec![],
            vec![vec![1], vec![]],
            vec![vec![], vec![NodeId::Cat(0)]],
        );
        let mut state = base_state(1, 2, 1);
        state.hu = vec![GaussianFactor::standard(2), GaussianFactor::deterministic(vec![5.0, 5.0])];
        state.hv = state.hu.clone();
        state.tau_hu = vec![GammaFactor::new(1.0, 1.0), GammaFactor::new(1.0, 1.0)];
        state.tau_hv = state.tau_hu.clone();
        let f = update_parent(0, Side::U, &state, &g);
        assert_eq!(f.precision_diag(), &[1.0, 1.0]);
        assert_abs_diff_eq!(f.mean()[0], 5.0, epsilon = 1e-12);

        // Two co-parents of one leaf: subtraction of the sibling's mean.
        let g = EntityGraph::build(&["c"], &[("c", "h1"), ("c", "h2")]).unwrap();
        let mut state = base_state(1, 2, 1);
        state.hu = vec![GaussianFactor::standard(2), GaussianFactor::deterministic(vec![2.0, 0.0])];
        state.hv = state.hu.clone();
        state.tau_hu = vec![GammaFactor::new(1.0, 1.0), GammaFactor::new(1.0, 1.0)];
        state.tau_hv = state.tau_hu.clone();
        state.u[0] = GaussianFactor::deterministic(vec![2.0, 0.0]);
        let f = update_parent(0, Side::U, &state, &g);
        assert_abs_diff_eq!(f.precision_diag()[0], 1.25, epsilon = 1e-9);
        assert_abs_diff_eq!(f.mean()[0], 0.4, epsilon = 1e-7);
        assert_abs_diff_eq!(f.mean()[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn bias_update_examples() {
        let mut state = base_state(2, 2, 1);
        let f = update_bias(1, &state, &empty_epoch());
        assert_eq!((f.mean_scalar(), f.precision_diag()[0]), (0.0, 1.0));

        state.u[0] = GaussianFactor::standard(2);
        state.v[1] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.b[1] = GaussianFactor::deterministic(vec![0.0]);
        let f = update_bias(1, &state, &cooc_epoch(vec![(0, 1, 1, 1)]));
        assert_abs_diff_eq!(f.precision_diag()[0], 1.0 + TWO_LAMBDA_1, epsilon = 1e-6);
        assert_abs_diff_eq!(f.mean_scalar(), 0.406_153_8, epsilon = 1e-6);

        let f = update_bias(1, &state, &cooc_epoch(vec![(0, 1, -1, 1)]));
        assert_abs_diff_eq!(f.mean_scalar(), -0.406_153_8, epsilon = 1e-6);
    }

    #[test]
    fn relation_bias_update_examples() {
        let mut state = base_state(2, 2, 1);
        let f = update_relation_bias(1, 0, &state, &rel_epoch(Vec::new()));
        assert_eq!((f.mean_scalar(), f.precision_diag()[0]), (0.0, 1.0));

        // u standard, map columns deterministic along the first axis:
        // mu_u^T M mu_v = 0, zeta = 1.
        state.u[0] = GaussianFactor::standard(2);
        state.v[1] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.x[0][0] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.y[0][0] = GaussianFactor::deterministic(vec![1.0, 0.0]);
        state.r[0][1] = GaussianFactor::deterministic(vec![0.0]);
        let zeta = update_variational(0, 1, PairKind::Rel(0), &state);
        assert_abs_diff_eq!(zeta, 1.0, epsilon = 1e-4);
        let f = update_relation_bias(1, 0, &state, &rel_epoch(vec![(0, 1, 1, 1)]));
        assert_abs_diff_eq!(f.precision_diag()[0], 1.0 + TWO_LAMBDA_1, epsilon = 1e-4);
        assert_abs_diff_eq!(f.mean_scalar(), 0.406_153_8, epsilon = 1e-4);

        // Doubling pair multiplicity doubles both data terms.
        let f1 = update_relation_bias(1, 0, &state, &rel_epoch(vec![(0, 1, 1, 1)]));
        let f2 = update_relation_bias(1, 0, &state, &rel_epoch(vec![(0, 1, 1, 2)]));
        let data_prec1 = f1.precision_diag()[0] - 1.0;
        let data_prec2 = f2.precision_diag()[0] - 1.0;
        assert_abs_diff_eq!(data_prec2, 2.0 * data_prec1, epsilon = 1e-9);
        let pre1 = f1.mean_scalar() * f1.precision_diag()[0];
        let pre2 = f2.mean_scalar() * f2.precision_diag()[0];
        assert_abs_diff_eq!(pre2, 2.0 * pre1, epsilon = 1e-9);
    }

    #[test]
    fn gamma_update_examples() {
        let g = graph_no_hierarchy(2);
        let mut state = base_state(2, 50, 1);
        state.u[0] = GaussianFactor::standard(50);
        let f = update_gamma(GammaTarget::U(0), &state, &g, 1.0, 1.0);
        assert_eq!((f.shape, f.rate), (26.0, 26.0));
        assert_abs_diff_eq!(f.mean(), 1.0, epsilon = 1e-12);

        let mut state = base_state(2, 2, 1);
        state.b[0] = GaussianFactor::deterministic(vec![0.0]);
        let f = update_gamma(GammaTarget::B(0), &state, &g, 1.0, 1.0);
        assert_abs_diff_eq!(f.shape, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.rate, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f.mean(), 1.5, epsilon = 1e-6);

        // Leaf pinned exactly at a deterministic parent mean.
        let g = EntityGraph::build(&["a"], &[("a", "top")]).unwrap();
        let mut state = base_state(1, 2, 1);
        state.hu = vec![GaussianFactor::deterministic(vec![1.5, -0.5])];
        state.hv = state.hu.clone();
        state.tau_hu = vec![GammaFactor::new(1.0, 1.0)];
        state.tau_hv = state.tau_hu.clone();
        state.u[0] = GaussianFactor::deterministic(vec![1.5, -0.5]);
        let f = update_gamma(GammaTarget::U(0), &state, &g, 1.0, 1.0);
        assert_abs_diff_eq!(f.rate, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f.mean(), 2.0, epsilon = 1e-6);
    }
}
