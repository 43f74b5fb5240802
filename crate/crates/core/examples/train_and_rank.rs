//! End-to-end walkthrough: build a toy taxonomy dataset, train, save, reload,
//! and rank candidates for a few queries.
//!
//! ```bash
//! cargo run --example train_and_rank
//! ```

use varembed::archive::{self, ModelArchive, RelationMeta};
use varembed::graph::EntityGraph;
use varembed::inference::rank_candidates;
use varembed::sampling::{CoOccurrenceData, RelationData};
use varembed::trainer::{fit, TrainConfig};
use varembed::updates::PairKind;

fn main() {
    // A tiny two-topic vocabulary under a shared root. "mouse" sits under
    // both topics: ambiguous entities simply get two parents.
    let leaves = [
        "dog", "poodle", "terrier", "cat", "tabby", // animals
        "mouse", // ambiguous
        "laptop", "keyboard", "screen", "printer", // devices
    ];
    let edges = [
        ("dog", "animal"),
        ("poodle", "animal"),
        ("terrier", "animal"),
        ("cat", "animal"),
        ("tabby", "animal"),
        ("mouse", "animal"),
        ("mouse", "device"),
        ("laptop", "device"),
        ("keyboard", "device"),
        ("screen", "device"),
        ("printer", "device"),
        ("animal", "thing"),
        ("device", "thing"),
    ];
    let graph = EntityGraph::build(&leaves, &edges).unwrap();

    // Co-occurrence counts: animals appear together, devices appear together,
    // and "mouse" co-occurs with both sides.
    let id = |name: &str| graph.leaf_id(name).unwrap();
    let animal = ["dog", "poodle", "terrier", "cat", "tabby"];
    let device = ["laptop", "keyboard", "screen", "printer"];
    let mut pairs = Vec::new();
    for group in [&animal[..], &device[..]] {
        for a in group {
            for b in group {
                if a != b {
                    pairs.push((id(a), id(b), 4));
                }
            }
        }
    }
    for other in ["dog", "cat", "laptop", "keyboard"] {
        pairs.push((id("mouse"), id(other), 3));
        pairs.push((id(other), id("mouse"), 3));
    }
    let cooc = CoOccurrenceData::new(pairs, graph.n_leaves()).unwrap();

    // One typed relation with a low-rank bilinear map.
    let relation = RelationData::new(
        "companion-of".into(),
        false,
        2,
        &[(id("dog"), id("cat")), (id("poodle"), id("tabby"))],
        graph.n_leaves(),
    )
    .unwrap();

    let config = TrainConfig {
        dim: 12,
        epochs: 40,
        seed: 1,
        subsample_rho: 1.0, // tiny corpus: keep every positive
        ..TrainConfig::default()
    };
    println!("training on {} entities, {} categories ...", graph.n_leaves(), graph.n_categories());
    let (state, log) = fit(&graph, &cooc, std::slice::from_ref(&relation), &config).unwrap();
    let last = log.records.last().unwrap();
    println!(
        "done after {} epochs (converged: {}), final bound {:.3}\n",
        log.records.len(),
        log.converged,
        last.elbo
    );

    // Save and reload: the archive is a versioned text file and the
    // round-trip reproduces every parameter exactly.
    let dir = std::env::temp_dir().join("varembed-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("toy-model.tsv");
    let archive = ModelArchive {
        state,
        graph,
        relations: vec![RelationMeta { name: "companion-of".into(), directed: false, rank: 2 }],
        config,
        frequencies: (0..leaves.len() as u32).map(|i| cooc.count(i)).collect(),
    };
    archive::save(&path, &archive).unwrap();
    let archive = archive::load(&path).unwrap();
    println!("archive round-trip through {} ok\n", path.display());

    let catalog: Vec<u32> = (0..archive.graph.n_leaves() as u32).collect();
    for query in ["dog", "laptop", "mouse"] {
        let q = archive.graph.leaf_id(query).unwrap();
        let ranked = rank_candidates(&archive.state.u[q as usize], &catalog, PairKind::Cooc, &archive.state).unwrap();
        let top: Vec<String> = ranked
            .iter()
            .filter(|&&(j, _)| j != q)
            .take(3)
            .map(|&(j, p)| format!("{} ({:.2})", archive.graph.leaf_name(j), p))
            .collect();
        println!("nearest to {query:<8} -> {}", top.join(", "));
    }
}
