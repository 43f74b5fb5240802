//! Typed relations through low-rank bilinear maps: retrieving "opposites"
//! that never co-occur, which plain co-occurrence ranking cannot reach.
//!
//! ```bash
//! cargo run --example typed_relations
//! ```

use varembed::graph::EntityGraph;
use varembed::inference::rank_candidates;
use varembed::sampling::{CoOccurrenceData, RelationData};
use varembed::trainer::{fit, TrainConfig};
use varembed::updates::PairKind;

fn main() {
    // Six co-occurrence blocks of four words. The "opposite-of" relation
    // links block k with block k+3, so an opposite never shares a context
    // with its query.
    let leaves: Vec<String> = (0..24).map(|i| format!("word{i:02}")).collect();
    let leaf_refs: Vec<&str> = leaves.iter().map(String::as_str).collect();
    let graph = EntityGraph::build(&leaf_refs, &[]).unwrap();

    let mut pairs = Vec::new();
    for block in 0..6u32 {
        for a in 0..4u32 {
            for b in 0..4u32 {
                if a != b {
                    pairs.push((block * 4 + a, block * 4 + b, 4));
                }
            }
        }
    }
    let cooc = CoOccurrenceData::new(pairs, 24).unwrap();

    // Train pairs cover most of the block correspondence; the probe pair is
    // held out entirely.
    let mut rel_pairs = Vec::new();
    for block in 0..3u32 {
        for m in 0..4u32 {
            for n in 0..4u32 {
                if (block, m, n) != (0, 0, 0) {
                    rel_pairs.push((block * 4 + m, (block + 3) * 4 + n));
                }
            }
        }
    }
    let relation = RelationData::new("opposite-of".into(), false, 3, &rel_pairs, 24).unwrap();

    let config = TrainConfig { dim: 10, epochs: 40, seed: 3, subsample_rho: 1.0, ..TrainConfig::default() };
    let (state, _) = fit(&graph, &cooc, std::slice::from_ref(&relation), &config).unwrap();

    // The held-out opposite of word00 is word12 (block 0 -> block 3).
    let catalog: Vec<u32> = (0..24).collect();
    let query = 0u32;

    let by_rel = rank_candidates(&state.u[query as usize], &catalog, PairKind::Rel(0), &state).unwrap();
    let rel_rank = by_rel.iter().position(|&(j, _)| j == 12).unwrap() + 1;
    let top: Vec<String> = by_rel.iter().take(5).map(|&(j, p)| format!("{} ({p:.2})", graph.leaf_name(j))).collect();
    println!("ranking by the opposite-of map:");
    println!("  top-5: {}", top.join(", "));
    println!("  held-out opposite word12 ranks {rel_rank} of 24\n");

    let by_cooc = rank_candidates(&state.u[query as usize], &catalog, PairKind::Cooc, &state).unwrap();
    let cooc_rank = by_cooc.iter().position(|&(j, _)| j == 12).unwrap() + 1;
    let top: Vec<String> = by_cooc.iter().take(5).map(|&(j, p)| format!("{} ({p:.2})", graph.leaf_name(j))).collect();
    println!("ranking by co-occurrence for the same query:");
    println!("  top-5: {}", top.join(", "));
    println!("  word12 ranks {cooc_rank} of 24 (context neighbors win, as they should)");
}
