//! The conflict-free update partition: nodes in one set share no parent,
//! child, or co-parent, so a whole set updates in parallel without changing
//! any result.
//!
//! ```bash
//! cargo run --example partition_demo
//! ```

use varembed::graph::{check_partition, partition, EntityGraph, NodeId};

fn main() {
    // A small taxonomy with an ambiguous leaf ("mouse" has two parents) and
    // a shared grandparent, which forces a deferral: "animal" and "device"
    // are co-parents of mouse and may not update together.
    let leaves = ["poodle", "terrier", "tabby", "mouse", "laptop"];
    let edges = [
        ("poodle", "dog"),
        ("terrier", "dog"),
        ("tabby", "cat"),
        ("dog", "animal"),
        ("cat", "animal"),
        ("mouse", "animal"),
        ("mouse", "device"),
        ("laptop", "device"),
        ("animal", "thing"),
        ("device", "thing"),
    ];
    let graph = EntityGraph::build(&leaves, &edges).unwrap();
    let parts = partition(&graph);

    println!("update sets, bottom-up:");
    for (m, set) in parts.sets.iter().enumerate() {
        let names: Vec<String> = set
            .iter()
            .map(|&n| match n {
                NodeId::Leaf(i) => graph.leaf_name(i).to_string(),
                NodeId::Cat(c) => format!("[{}]", graph.cat_name(c)),
            })
            .collect();
        println!("  Y{} = {{ {} }}", m + 1, names.join(", "));
    }

    let report = check_partition(&graph, &parts);
    println!("\nverifier report: {} violations", report.len());

    // Plant a violation to show the verifier's witnesses.
    let mut broken = parts.clone();
    let moved = broken.sets[2].remove(0);
    broken.sets[1].push(moved);
    let report = check_partition(&graph, &broken);
    println!("after moving one category a level down: {} violations", report.len());
    for v in report.iter().take(3) {
        println!("  {}", v.describe(&graph));
    }
}
