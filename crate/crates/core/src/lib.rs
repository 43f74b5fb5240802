//! Bayesian entity embeddings with hierarchical priors, typed relations, and
//! uncertainty-aware ranking.
//!
//! The library learns a diagonal Gaussian posterior factor for every entity
//! representation (plus Gamma factors for every precision variable) from
//! three data streams: co-occurrence pairs, a category hierarchy acting as a
//! network of informative priors, and typed entity relations scored through
//! low-rank bilinear maps. Training is bounded variational coordinate ascent:
//! logistic likelihood terms are lower-bounded by per-pair Gaussian-form
//! bounds, every coordinate update is closed-form, and a DAG partition makes
//! the updates within each phase independent, so parallel training is exact.
//! Queries are served through a Gaussian approximation of the score
//! distribution and a probit-style closed form of the logistic-Gaussian
//! integral, which keeps uncertainty in the ranking: rare entities fall back
//! on their category priors and score with honest variance.
//!
//! Modules follow the pipeline: [`graph`] (hierarchy + update partition),
//! [`sampling`] (per-epoch subsampling and negatives), [`factors`] (moment
//! algebra), [`updates`] (coordinate updates), [`trainer`] (schedule, bound,
//! fit), [`inference`] (predictive scoring and ranking), [`eval`] (metrics),
//! [`archive`]/[`io`]/[`cli`] (persistence and the command-line surface).
//!
//! The `examples/` directory holds one runnable walkthrough per capability;
//! start with `cargo run --example train_and_rank`.

pub mod archive;
pub mod cli;
pub mod eval;
pub mod factors;
pub mod graph;
pub mod inference;
pub mod io;
pub mod rng;
pub mod sampling;
pub mod trainer;
pub mod updates;
