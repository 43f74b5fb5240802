// Temporary debugging probe; removed before release.
use varembed::graph::EntityGraph;
use varembed::inference::rank_candidates;
use varembed::rng::stream_rng;
use varembed::sampling::CoOccurrenceData;
use varembed::trainer::{fit, TrainConfig};
use varembed::updates::PairKind;
use rand::Rng;

fn main() {
    for seed in 0..4u64 {
        let leaves: Vec<String> = (0..20)
            .map(|i| format!("a{i:02}"))
            .chain((0..20).map(|i| format!("b{i:02}")))
            .collect();
        let mut edges: Vec<(String, String)> = Vec::new();
        for i in 0..20 {
            edges.push((format!("a{i:02}"), "clusterA".into()));
            edges.push((format!("b{i:02}"), "clusterB".into()));
        }
        let leaf_refs: Vec<&str> = leaves.iter().map(String::as_str).collect();
        let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let graph = EntityGraph::build(&leaf_refs, &edge_refs).unwrap();
        let idx = |name: &str| graph.leaf_id(name).unwrap();
        let cold = idx("a00");
        let mut rng = stream_rng(seed, "acceptance/cold-start", 0);
        let mut pairs: Vec<(u32, u32, u32)> = Vec::new();
        let mut held_out: Vec<(u32, u32)> = Vec::new();
        for cluster in 0..2u32 {
            let name = |local: u32| {
                if cluster == 0 { idx(&format!("a{local:02}")) } else { idx(&format!("b{local:02}")) }
            };
            for block in 0..5u32 {
                let members: Vec<u32> = (0..4u32).map(|m| name(block * 4 + m)).collect();
                let reserved = if cluster == 0 && block == 0 {
                    None
                } else {
                    held_out.push((members[2], members[3]));
                    Some((members[2], members[3]))
                };
                for &a in &members {
                    for &b in &members {
                        if a == b || a == cold || b == cold { continue; }
                        if reserved == Some((a, b)) || reserved == Some((b, a)) { continue; }
                        pairs.push((a, b, rng.random_range(6..=9)));
                    }
                }
            }
        }
        pairs.push((cold, idx("a01"), 1));
        let cooc = CoOccurrenceData::new(pairs, 40).unwrap();

        let config = TrainConfig { dim: 10, epochs: 40, seed, subsample_rho: 1.0, ..TrainConfig::default() };
        let (full, log) = fit(&graph, &cooc, &[], &config).unwrap();
        let catalog: Vec<u32> = (0..40).collect();
        let mut ranks = Vec::new();
        for &(q, target) in &held_out {
            let ranked = rank_candidates(&full.u[q as usize], &catalog, PairKind::Cooc, &full).unwrap();
            let rank = ranked.iter().position(|&(j, _)| j == target).unwrap() + 1;
            ranks.push(rank);
            if seed == 0 {
                let names: Vec<String> = ranked.iter().take(6).map(|&(j, p)| format!("{}:{:.3}", graph.leaf_name(j), p)).collect();
                println!(
                    "  q={} target={} rank={} top: {}",
                    graph.leaf_name(q),
                    graph.leaf_name(target),
                    rank,
                    names.join(" ")
                );
            }
        }
        println!(
            "seed {seed}: epochs_run={} converged={} ranks={:?}",
            log.records.len(),
            log.converged,
            ranks
        );
    }
}
