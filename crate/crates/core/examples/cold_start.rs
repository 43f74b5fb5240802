//! Cold-start behavior: an entity seen once falls back on its category
//! prior. Compares a hierarchy-aware model against a hierarchy-free run on
//! identical data.
//!
//! ```bash
//! cargo run --example cold_start
//! ```

use rand::Rng;
use varembed::graph::EntityGraph;
use varembed::inference::rank_candidates;
use varembed::rng::stream_rng;
use varembed::sampling::CoOccurrenceData;
use varembed::trainer::{fit, TrainConfig};
use varembed::updates::PairKind;

fn main() {
    // Two topic clusters of 12 entities each; "rare0" is a cluster-A member
    // with exactly one observation.
    let mut leaves: Vec<String> = (0..12).map(|i| format!("a{i:02}")).collect();
    leaves.extend((0..12).map(|i| format!("b{i:02}")));
    let mut edges = Vec::new();
    for i in 0..12 {
        edges.push((format!("a{i:02}"), "topicA".to_string()));
        edges.push((format!("b{i:02}"), "topicB".to_string()));
    }
    let leaf_refs: Vec<&str> = leaves.iter().map(String::as_str).collect();
    let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let graph = EntityGraph::build(&leaf_refs, &edge_refs).unwrap();
    let flat = EntityGraph::build(&leaf_refs, &[]).unwrap();

    let id = |n: &str| graph.leaf_id(n).unwrap();
    let cold = id("a00");
    let mut rng = stream_rng(5, "example/cold-start", 0);
    let mut pairs = Vec::new();
    for prefix in ["a", "b"] {
        for i in 0..12u32 {
            for j in 0..12u32 {
                let (x, y) = (id(&format!("{prefix}{i:02}")), id(&format!("{prefix}{j:02}")));
                if x != y && x != cold && y != cold && rng.random_range(0..3u8) > 0 {
                    pairs.push((x, y, rng.random_range(2..=5)));
                }
            }
        }
    }
    pairs.push((cold, id("a01"), 1)); // the single observation
    let cooc = CoOccurrenceData::new(pairs, graph.n_leaves()).unwrap();

    let config = TrainConfig { dim: 10, epochs: 40, seed: 5, subsample_rho: 1.0, ..TrainConfig::default() };
    let (with_prior, _) = fit(&graph, &cooc, &[], &config).unwrap();
    let (without_prior, _) = fit(&flat, &cooc, &[], &config).unwrap();

    let parent = with_prior.hu[graph.cat_id("topicA").unwrap() as usize].mean();
    let dist = |mean: &[f64]| -> f64 {
        mean.iter().zip(parent).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    println!("distance of the cold entity's mean to its topic prototype:");
    println!("  with hierarchy    {:.3}", dist(with_prior.u[cold as usize].mean()));
    println!("  without hierarchy {:.3}\n", dist(without_prior.u[cold as usize].mean()));

    // Posterior uncertainty: the cold entity keeps a wide posterior, a warm
    // one contracts.
    let spread = |f: &varembed::factors::GaussianFactor| -> f64 {
        (f.variance_diag().iter().sum::<f64>() / f.dim() as f64).sqrt()
    };
    println!("posterior spread (mean stddev per dimension):");
    println!("  cold a00 {:.3}", spread(&with_prior.u[cold as usize]));
    println!("  warm a05 {:.3}\n", spread(&with_prior.u[id("a05") as usize]));

    let catalog: Vec<u32> = (0..graph.n_leaves() as u32).collect();
    for (label, state) in [("with hierarchy", &with_prior), ("without", &without_prior)] {
        let ranked = rank_candidates(&state.u[cold as usize], &catalog, PairKind::Cooc, state).unwrap();
        let in_cluster = ranked
            .iter()
            .take(6)
            .filter(|&&(j, _)| graph.leaf_name(j).starts_with('a'))
            .count();
        let top: Vec<&str> = ranked.iter().take(6).map(|&(j, _)| graph.leaf_name(j)).collect();
        println!("top-6 for the cold entity ({label}): {} [{in_cluster}/6 in-cluster]", top.join(" "));
    }
}
