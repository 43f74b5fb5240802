//! Retrieval evaluation: hidden-target ranking with hit-rate and mean
//! percentile rank, plus rank correlation against gold similarity scores.
//!
//! ```bash
//! cargo run --example evaluate
//! ```

use rand::Rng;
use varembed::eval::{hit_rate_at, mpr, spearman, RankedTestCase};
use varembed::graph::EntityGraph;
use varembed::inference::{aggregate_query, predict_for_query, rank_candidates};
use varembed::rng::stream_rng;
use varembed::sampling::CoOccurrenceData;
use varembed::trainer::{fit, TrainConfig};
use varembed::updates::PairKind;

fn main() {
    // Five topic blocks of six entities; one in-block pair per block is held
    // out of training and used as a retrieval case.
    let leaves: Vec<String> = (0..30).map(|i| format!("item{i:02}")).collect();
    let mut edges = Vec::new();
    for i in 0..30 {
        edges.push((format!("item{i:02}"), format!("topic{}", i / 6)));
    }
    let leaf_refs: Vec<&str> = leaves.iter().map(String::as_str).collect();
    let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let graph = EntityGraph::build(&leaf_refs, &edge_refs).unwrap();

    let mut rng = stream_rng(11, "example/eval", 0);
    let mut pairs = Vec::new();
    let mut held_out = Vec::new();
    for block in 0..5u32 {
        let base = block * 6;
        held_out.push((base + 1, base + 2));
        for a in 0..6u32 {
            for b in 0..6u32 {
                let (x, y) = (base + a, base + b);
                if x == y || (x, y) == held_out[block as usize] || (y, x) == held_out[block as usize] {
                    continue;
                }
                pairs.push((x, y, rng.random_range(3..=6)));
            }
        }
    }
    let cooc = CoOccurrenceData::new(pairs, 30).unwrap();

    let config = TrainConfig { dim: 10, epochs: 40, seed: 11, subsample_rho: 1.0, ..TrainConfig::default() };
    let (state, _) = fit(&graph, &cooc, &[], &config).unwrap();

    // Hidden-target retrieval: queries may be bags; here a bag of two
    // same-topic items queries for the held-out partner.
    let catalog: Vec<u32> = (0..30).collect();
    let mut cases = Vec::new();
    for &(q, target) in &held_out {
        let bag = aggregate_query(&[&state.u[q as usize], &state.u[(q + 2) as usize]]).unwrap();
        let ranked = rank_candidates(&bag, &catalog, PairKind::Cooc, &state).unwrap();
        let rank = ranked.iter().position(|&(j, _)| j == target).unwrap() + 1;
        cases.push(RankedTestCase::new(rank, catalog.len()).unwrap());
    }
    println!("held-out retrieval over {} cases:", cases.len());
    println!("  HR@10% = {:.2}", hit_rate_at(&cases, 10.0).unwrap());
    println!("  HR@20% = {:.2}", hit_rate_at(&cases, 20.0).unwrap());
    println!("  MPR    = {:.3}\n", mpr(&cases).unwrap());

    // Similarity judgments: gold scores rate same-topic pairs 1 and
    // cross-topic pairs 0 (ties get average ranks).
    let mut model_scores = Vec::new();
    let mut gold = Vec::new();
    for _ in 0..60 {
        let i = rng.random_range(0..30u32);
        let j = rng.random_range(0..30u32);
        if i == j {
            continue;
        }
        let p = predict_for_query(&state.u[i as usize], j, PairKind::Cooc, &state).unwrap();
        model_scores.push(p);
        gold.push(if i / 6 == j / 6 { 1.0 } else { 0.0 });
    }
    println!(
        "rank correlation with gold topic similarity over {} pairs: {:.3}",
        gold.len(),
        spearman(&model_scores, &gold).unwrap()
    );
}
