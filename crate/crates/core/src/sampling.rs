//! Per-epoch construction of the stochastic training sets: frequency-based
//! subsampling of co-occurrence positives and uniform negative sampling for
//! both co-occurrence and typed-relation streams.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::rng::stream_rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("entity index {0} out of range (catalog size {1})")]
    EntityOutOfRange(u32, usize),
    #[error("pair count must be >= 1 for pair ({0}, {1})")]
    ZeroCount(u32, u32),
    #[error("entity {0}: positives cover the whole catalog, no negative can be drawn")]
    CatalogExhausted(u32),
}

/// Raw co-occurrence positives as a count-weighted pair multiset, plus the
/// entity frequencies derived from it.
#[derive(Debug, Clone)]
pub struct CoOccurrenceData {
    positives: Vec<(u32, u32, u32)>,
    counts: Vec<u64>,
    total: u64,
    n_entities: usize,
}

impl CoOccurrenceData {
    pub fn new(mut positives: Vec<(u32, u32, u32)>, n_entities: usize) -> Result<Self, SamplingError> {
        let mut counts = vec![0u64; n_entities];
        for &(i, j, c) in &positives {
            if i as usize >= n_entities {
                return Err(SamplingError::EntityOutOfRange(i, n_entities));
            }
            if j as usize >= n_entities {
                return Err(SamplingError::EntityOutOfRange(j, n_entities));
            }
            if c == 0 {
                return Err(SamplingError::ZeroCount(i, j));
            }
            counts[i as usize] += u64::from(c);
            counts[j as usize] += u64::from(c);
        }
        positives.sort_unstable();
        let total = counts.iter().sum();
        Ok(Self { positives, counts, total, n_entities })
    }

    pub fn positives(&self) -> &[(u32, u32, u32)] {
        &self.positives
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    /// Occurrence count of entity `i` across both pair slots.
    pub fn count(&self, i: u32) -> u64 {
        self.counts[i as usize]
    }

    /// Relative frequency p(i); zero when the dataset is empty.
    pub fn frequency(&self, i: u32) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[i as usize] as f64 / self.total as f64
        }
    }
}

/// Positive pairs of one typed relation. Undirected relations are stored
/// closed under orientation swap so downstream code never special-cases them.
#[derive(Debug, Clone)]
pub struct RelationData {
    pub name: String,
    pub directed: bool,
    pub rank: usize,
    positives: Vec<(u32, u32)>,
    by_left: HashMap<u32, HashSet<u32>>,
}

impl RelationData {
    pub fn new(
        name: String,
        directed: bool,
        rank: usize,
        pairs: &[(u32, u32)],
        n_entities: usize,
    ) -> Result<Self, SamplingError> {
        assert!(rank >= 1, "relation rank must be >= 1");
        let mut set: HashSet<(u32, u32)> = HashSet::new();
        for &(i, j) in pairs {
            if i as usize >= n_entities {
                return Err(SamplingError::EntityOutOfRange(i, n_entities));
            }
            if j as usize >= n_entities {
                return Err(SamplingError::EntityOutOfRange(j, n_entities));
            }
            set.insert((i, j));
            if !directed {
                set.insert((j, i));
            }
        }
        let mut positives: Vec<(u32, u32)> = set.into_iter().collect();
        positives.sort_unstable();
        let mut by_left: HashMap<u32, HashSet<u32>> = HashMap::new();
        for &(i, j) in &positives {
            by_left.entry(i).or_default().insert(j);
        }
        Ok(Self { name, directed, rank, positives, by_left })
    }

    pub fn positives(&self) -> &[(u32, u32)] {
        &self.positives
    }

    pub fn is_positive(&self, i: u32, j: u32) -> bool {
        self.by_left.get(&i).is_some_and(|s| s.contains(&j))
    }
}

/// One labeled, count-weighted pair stream with left/right indexes.
#[derive(Debug, Clone, Default)]
pub struct LabeledPairs {
    /// `(left, right, label in {+1,-1}, count)` sorted by `(left, right, label)`.
    pub pairs: Vec<(u32, u32, i8, u32)>,
    by_left: HashMap<u32, Vec<usize>>,
    by_right: HashMap<u32, Vec<usize>>,
}

impl LabeledPairs {
    /// Builds a stream from raw labeled pairs (used for fixed, hand-built
    /// datasets; training epochs come from [`build_epoch_dataset`]).
    pub fn from_pairs(pairs: Vec<(u32, u32, i8, u32)>) -> Self {
        Self::new(pairs)
    }

    fn new(mut pairs: Vec<(u32, u32, i8, u32)>) -> Self {
        pairs.sort_unstable();
        let mut by_left: HashMap<u32, Vec<usize>> = HashMap::new();
        let mut by_right: HashMap<u32, Vec<usize>> = HashMap::new();
        for (idx, &(i, j, _, _)) in pairs.iter().enumerate() {
            by_left.entry(i).or_default().push(idx);
            by_right.entry(j).or_default().push(idx);
        }
        Self { pairs, by_left, by_right }
    }

    /// Pairs with left entity `i`, partner-ascending.
    pub fn with_left(&self, i: u32) -> impl Iterator<Item = (u32, u32, i8, u32)> + '_ {
        self.by_left
            .get(&i)
            .into_iter()
            .flatten()
            .map(|&idx| self.pairs[idx])
    }

    /// Pairs with right entity `j`, partner-ascending.
    pub fn with_right(&self, j: u32) -> impl Iterator<Item = (u32, u32, i8, u32)> + '_ {
        self.by_right
            .get(&j)
            .into_iter()
            .flatten()
            .map(|&idx| self.pairs[idx])
    }

    /// Total count weight of the stream.
    pub fn weight(&self) -> u64 {
        self.pairs.iter().map(|&(_, _, _, c)| u64::from(c)).sum()
    }
}

/// One epoch's sampled training data: the co-occurrence stream and one stream
/// per declared relation.
#[derive(Debug, Clone, Default)]
pub struct EpochDataset {
    pub cooc: LabeledPairs,
    pub rel: Vec<LabeledPairs>,
}

/// Keeps each occurrence of a positive pair independently with probability
/// `min(1, sqrt(rho/p(i))) * min(1, sqrt(rho/p(j)))`.
pub fn subsample_positives(
    data: &CoOccurrenceData,
    rho: f64,
    rng: &mut impl Rng,
) -> Vec<(u32, u32, u32)> {
    assert!(rho > 0.0, "subsample threshold must be positive");
    let keep_side = |i: u32| -> f64 {
        let p = data.frequency(i);
        if p <= rho {
            1.0
        } else {
            (rho / p).sqrt()
        }
    };
    let mut kept = Vec::new();
    for &(i, j, c) in data.positives() {
        let p_keep = keep_side(i) * keep_side(j);
        let retained = if p_keep >= 1.0 {
            c
        } else {
            Binomial::new(u64::from(c), p_keep).unwrap().sample(rng) as u32
        };
        if retained > 0 {
            kept.push((i, j, retained));
        }
    }
    kept
}

/// Draws `n` uniform negatives `(i, z)` per positive occurrence, rejecting
/// and redrawing any `z` for which `(i, z)` is in `reject`.
pub fn sample_negatives(
    positives: &[(u32, u32, u32)],
    n: u32,
    n_entities: usize,
    reject: &HashMap<u32, HashSet<u32>>,
    rng: &mut impl Rng,
) -> Result<Vec<(u32, u32, u32)>, SamplingError> {
    let lefts: HashSet<u32> = positives.iter().map(|&(i, _, _)| i).collect();
    let mut lefts: Vec<u32> = lefts.into_iter().collect();
    lefts.sort_unstable();
    for &i in &lefts {
        if reject.get(&i).map_or(0, HashSet::len) >= n_entities {
            return Err(SamplingError::CatalogExhausted(i));
        }
    }

    let mut drawn: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for &(i, _, c) in positives {
        let excluded = reject.get(&i);
        for _ in 0..u64::from(c) * u64::from(n) {
            let z = loop {
                let z = rng.random_range(0..n_entities) as u32;
                if !excluded.is_some_and(|s| s.contains(&z)) {
                    break z;
                }
            };
            *drawn.entry((i, z)).or_insert(0) += 1;
        }
    }
    Ok(drawn.into_iter().map(|((i, z), c)| (i, z, c)).collect())
}

fn left_index(pairs: &[(u32, u32, u32)]) -> HashMap<u32, HashSet<u32>> {
    let mut map: HashMap<u32, HashSet<u32>> = HashMap::new();
    for &(i, j, _) in pairs {
        map.entry(i).or_default().insert(j);
    }
    map
}

/// Builds one epoch's labeled training sets. Co-occurrence positives are
/// subsampled fresh each epoch; relation positives are used in full. Both
/// streams get `neg_ratio` fresh uniform negatives per retained occurrence.
/// Fully determined by `(seed, epoch)`.
pub fn build_epoch_dataset(
    cooc: &CoOccurrenceData,
    relations: &[RelationData],
    neg_ratio: u32,
    rho: f64,
    seed: u64,
    epoch: u64,
) -> Result<EpochDataset, SamplingError> {
    assert!(neg_ratio >= 1, "negative ratio must be >= 1");
    let n_entities = cooc.n_entities();

    let mut rng = stream_rng(seed, "epoch/cooc-subsample", epoch);
    let retained = subsample_positives(cooc, rho, &mut rng);
    let mut rng = stream_rng(seed, "epoch/cooc-negatives", epoch);
    let negatives = sample_negatives(&retained, neg_ratio, n_entities, &left_index(&retained), &mut rng)?;
    let mut labeled: Vec<(u32, u32, i8, u32)> = retained
        .iter()
        .map(|&(i, j, c)| (i, j, 1i8, c))
        .chain(negatives.iter().map(|&(i, j, c)| (i, j, -1i8, c)))
        .collect();
    labeled.sort_unstable();
    let cooc_pairs = LabeledPairs::new(labeled);

    let mut rel_pairs = Vec::with_capacity(relations.len());
    for (k, rel) in relations.iter().enumerate() {
        let positives: Vec<(u32, u32, u32)> =
            rel.positives().iter().map(|&(i, j)| (i, j, 1)).collect();
        let mut rng = stream_rng(seed, &format!("epoch/rel{k}-negatives"), epoch);
        let negatives =
            sample_negatives(&positives, neg_ratio, n_entities, &left_index(&positives), &mut rng)?;
        let labeled: Vec<(u32, u32, i8, u32)> = positives
            .iter()
            .map(|&(i, j, c)| (i, j, 1i8, c))
            .chain(negatives.iter().map(|&(i, j, c)| (i, j, -1i8, c)))
            .collect();
        rel_pairs.push(LabeledPairs::new(labeled));
    }

    Ok(EpochDataset { cooc: cooc_pairs, rel: rel_pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn subsample_keeps_everything_below_threshold() {
        let data = CoOccurrenceData::new(vec![(0, 1, 3), (1, 2, 2)], 3).unwrap();
        let mut rng = stream_rng(1, "test", 0);
        // All frequencies are <= rho = 1, so nothing is dropped.
        assert_eq!(subsample_positives(&data, 1.0, &mut rng), data.positives());
    }

    #[test]
    fn subsample_vanishes_in_the_small_rho_limit() {
        let data = CoOccurrenceData::new(vec![(0, 1, 50)], 2).unwrap();
        let mut rng = stream_rng(2, "test", 0);
        assert!(subsample_positives(&data, 1e-12, &mut rng).is_empty());
    }

    #[test]
    fn subsample_retention_matches_expectation() {
        // Two entities, each with relative frequency 1/2 = 4 * rho, so the
        // keep probability is 0.5 * 0.5 = 0.25 per occurrence.
        let data = CoOccurrenceData::new(vec![(0, 1, 100_000)], 2).unwrap();
        assert_eq!(data.frequency(0), 0.5);
        let mut rng = stream_rng(3, "test", 0);
        let kept = subsample_positives(&data, 0.125, &mut rng);
        let retained: u32 = kept.iter().map(|&(_, _, c)| c).sum();
        let fraction = f64::from(retained) / 100_000.0;
        assert!((fraction - 0.25).abs() < 0.01, "retained fraction {fraction}");
    }

    #[test]
    fn negatives_exclude_positives_and_count_out() {
        let positives = vec![(0u32, 1u32, 1u32)];
        let reject = left_index(&positives);
        let mut rng = stream_rng(4, "test", 0);
        for _ in 0..200 {
            let negs = sample_negatives(&positives, 1, 3, &reject, &mut rng).unwrap();
            let total: u32 = negs.iter().map(|&(_, _, c)| c).sum();
            assert_eq!(total, 1);
            for &(i, z, _) in &negs {
                assert_eq!(i, 0);
                assert_ne!(z, 1, "negative hit the positive pair");
            }
        }

        let positives: Vec<(u32, u32, u32)> = (0..1000).map(|k| (k % 10, 10 + k % 7, 1)).collect();
        let negs = sample_negatives(&positives, 2, 20, &left_index(&positives), &mut rng).unwrap();
        let total: u64 = negs.iter().map(|&(_, _, c)| u64::from(c)).sum();
        assert_eq!(total, 2000);
    }

    #[test]
    fn negatives_are_uniform_over_allowed_catalog() {
        // One positive per left entity, catalog of 100: each of the 99
        // admissible partners should be hit with probability 1/99.
        let positives = vec![(7u32, 31u32, 100_000u32)];
        let reject = left_index(&positives);
        let mut rng = stream_rng(5, "test", 0);
        let negs = sample_negatives(&positives, 1, 100, &reject, &mut rng).unwrap();
        let total: f64 = negs.iter().map(|&(_, _, c)| f64::from(c)).sum();
        assert_eq!(total, 100_000.0);
        let p = 1.0 / 99.0;
        let se = (p * (1.0 - p) / total).sqrt();
        for &(_, z, c) in &negs {
            assert_ne!(z, 31);
            let hit = f64::from(c) / total;
            assert!((hit - p).abs() <= 3.0 * se + 1e-9, "z={z} rate {hit} vs {p}");
        }
    }

    #[test]
    fn negatives_error_when_catalog_exhausted() {
        let positives = vec![(0u32, 0u32, 1u32), (0, 1, 1), (0, 2, 1)];
        let reject = left_index(&positives);
        assert_eq!(
            sample_negatives(&positives, 1, 3, &reject, &mut stream_rng(6, "test", 0)).unwrap_err(),
            SamplingError::CatalogExhausted(0)
        );
    }

    #[test]
    fn epoch_dataset_without_relations() {
        let cooc = CoOccurrenceData::new(vec![(0, 1, 2)], 4).unwrap();
        let epoch = build_epoch_dataset(&cooc, &[], 1, 1.0, 9, 0).unwrap();
        assert!(epoch.rel.is_empty());
        let positives: u64 = epoch
            .cooc
            .pairs
            .iter()
            .filter(|&&(_, _, l, _)| l == 1)
            .map(|&(_, _, _, c)| u64::from(c))
            .sum();
        let negatives: u64 = epoch
            .cooc
            .pairs
            .iter()
            .filter(|&&(_, _, l, _)| l == -1)
            .map(|&(_, _, _, c)| u64::from(c))
            .sum();
        assert_eq!(positives, 2);
        assert_eq!(negatives, 2);
    }

    #[test]
    fn epoch_dataset_is_deterministic_in_seed_and_epoch() {
        let cooc = CoOccurrenceData::new(vec![(0, 1, 3), (2, 3, 1), (1, 2, 2)], 6).unwrap();
        let rel = RelationData::new("ant".into(), false, 2, &[(0, 5), (2, 4)], 6).unwrap();
        let a = build_epoch_dataset(&cooc, std::slice::from_ref(&rel), 2, 0.5, 42, 7).unwrap();
        let b = build_epoch_dataset(&cooc, std::slice::from_ref(&rel), 2, 0.5, 42, 7).unwrap();
        assert_eq!(a.cooc.pairs, b.cooc.pairs);
        assert_eq!(a.rel[0].pairs, b.rel[0].pairs);
        let c = build_epoch_dataset(&cooc, std::slice::from_ref(&rel), 2, 0.5, 42, 8).unwrap();
        assert_ne!(a.rel[0].pairs, c.rel[0].pairs, "different epochs must resample");

        // Only negatives are resampled: the relation positives survive every
        // epoch with their full multiplicity.
        for epoch_data in [&a, &c] {
            let positives: Vec<(u32, u32, u32)> = epoch_data.rel[0]
                .pairs
                .iter()
                .filter(|p| p.2 == 1)
                .map(|&(i, j, _, w)| (i, j, w))
                .collect();
            let expected: Vec<(u32, u32, u32)> =
                rel.positives().iter().map(|&(i, j)| (i, j, 1)).collect();
            assert_eq!(positives, expected);
        }
    }

    #[test]
    fn epoch_labels_balance_with_unit_ratio() {
        let pairs: Vec<(u32, u32, u32)> = (0..100).map(|k| (k % 20, 20 + k % 30, 1)).collect();
        let cooc = CoOccurrenceData::new(pairs, 50).unwrap();
        // rho = 1 keeps every positive; n = 1 then forces a balanced epoch.
        let epoch = build_epoch_dataset(&cooc, &[], 1, 1.0, 11, 0).unwrap();
        let pos: u64 = epoch.cooc.pairs.iter().filter(|p| p.2 == 1).map(|p| u64::from(p.3)).sum();
        let neg: u64 = epoch.cooc.pairs.iter().filter(|p| p.2 == -1).map(|p| u64::from(p.3)).sum();
        assert_eq!(pos, 100);
        assert_eq!(neg, 100);
    }

    #[test]
    fn undirected_relations_store_both_orientations() {
        let rel = RelationData::new("ant".into(), false, 1, &[(0, 1)], 3).unwrap();
        assert_eq!(rel.positives(), &[(0, 1), (1, 0)]);
        assert!(rel.is_positive(1, 0));
        let rel = RelationData::new("hyper".into(), true, 1, &[(0, 1)], 3).unwrap();
        assert_eq!(rel.positives(), &[(0, 1)]);
        assert!(!rel.is_positive(1, 0));
    }

    #[test]
    fn relation_negatives_never_collide_with_full_positive_set() {
        let rel = RelationData::new("ant".into(), false, 1, &[(0, 1), (0, 2)], 8).unwrap();
        let epoch = build_epoch_dataset(
            &CoOccurrenceData::new(vec![(3, 4, 1)], 8).unwrap(),
            std::slice::from_ref(&rel),
            3,
            1.0,
            17,
            0,
        )
        .unwrap();
        for &(i, j, label, _) in &epoch.rel[0].pairs {
            if label == -1 {
                assert!(!rel.is_positive(i, j), "negative ({i},{j}) is a positive");
            }
        }
    }
}
