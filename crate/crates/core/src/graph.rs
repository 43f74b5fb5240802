//! Entity/category DAG and the conflict-free update partition.
//!
//! Every entity declared as a leaf owns a leaf node; every id that appears in
//! the parent column of the hierarchy owns a category node. An id may own
//! both, housed as two distinct nodes. A hierarchy edge `(child, parent)`
//! attaches the parent's category node above *each* node the child id owns.
//!
//! The graph is frozen after construction; training never mutates topology.

use std::collections::{BTreeSet, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("hierarchy cycle: {}", path.join(" -> "))]
    Cycle { path: Vec<String> },
    #[error("hierarchy references unknown id {0:?} (not a leaf and never a parent)")]
    DanglingId(String),
    #[error("self-edge on id {0:?}")]
    SelfEdge(String),
}

/// Identifier of one variable node: the leaf representation of an entity or
/// the category representation of an entity. Leaves order before categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Leaf(u32),
    Cat(u32),
}

/// The entity/category DAG shared by both representation sides.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityGraph {
    leaf_names: Vec<String>,
    cat_names: Vec<String>,
    leaf_index: HashMap<String, u32>,
    cat_index: HashMap<String, u32>,
    leaf_parents: Vec<Vec<u32>>,
    cat_parents: Vec<Vec<u32>>,
    cat_children: Vec<Vec<NodeId>>,
    edges: Vec<(String, String)>,
}

impl EntityGraph {
    /// Builds the graph from the declared leaf ids and `(child, parent)`
    /// hierarchy edges. Ids appearing only in the parent column become
    /// category nodes; an id that is both a leaf and a parent owns two nodes.
    pub fn build<S: AsRef<str>>(leaf_ids: &[S], hierarchy_edges: &[(S, S)]) -> Result<Self, GraphError> {
        let leaf_names: Vec<String> = {
            let set: BTreeSet<&str> = leaf_ids.iter().map(|s| s.as_ref()).collect();
            set.into_iter().map(str::to_owned).collect()
        };
        let leaf_index: HashMap<String, u32> = leaf_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();

        let edge_set: BTreeSet<(String, String)> = hierarchy_edges
            .iter()
            .map(|(c, p)| (c.as_ref().to_owned(), p.as_ref().to_owned()))
            .collect();
        for (child, parent) in &edge_set {
            if child == parent {
                return Err(GraphError::SelfEdge(child.clone()));
            }
        }

        let cat_names: Vec<String> = {
            let set: BTreeSet<&str> = edge_set.iter().map(|(_, p)| p.as_str()).collect();
            set.into_iter().map(str::to_owned).collect()
        };
        let cat_index: HashMap<String, u32> = cat_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();

        let mut graph = EntityGraph {
            leaf_parents: vec![Vec::new(); leaf_names.len()],
            cat_parents: vec![Vec::new(); cat_names.len()],
            cat_children: vec![Vec::new(); cat_names.len()],
            edges: edge_set.iter().cloned().collect(),
            leaf_names,
            cat_names,
            leaf_index,
            cat_index,
        };

        for (child, parent) in &edge_set {
            let p = graph.cat_index[parent.as_str()];
            let leaf = graph.leaf_index.get(child.as_str()).copied();
            let cat = graph.cat_index.get(child.as_str()).copied();
            if leaf.is_none() && cat.is_none() {
                return Err(GraphError::DanglingId(child.clone()));
            }
            if let Some(c) = leaf {
                graph.leaf_parents[c as usize].push(p);
                graph.cat_children[p as usize].push(NodeId::Leaf(c));
            }
            if let Some(c) = cat {
                graph.cat_parents[c as usize].push(p);
                graph.cat_children[p as usize].push(NodeId::Cat(c));
            }
        }
        for list in graph
            .leaf_parents
            .iter_mut()
            .chain(graph.cat_parents.iter_mut())
        {
            list.sort_unstable();
            list.dedup();
        }
        for list in graph.cat_children.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }

        if let Some(cycle) = graph.find_category_cycle() {
            let mut path: Vec<String> = cycle
                .iter()
                .map(|&c| graph.cat_names[c as usize].clone())
                .collect();
            path.push(graph.cat_names[cycle[0] as usize].clone());
            return Err(GraphError::Cycle { path });
        }
        Ok(graph)
    }

    /// Returns one directed cycle among category nodes, if any.
    fn find_category_cycle(&self) -> Option<Vec<u32>> {
        const WHITE: u8 = 0;
        const GRAY: u8 = 1;
        const BLACK: u8 = 2;
        let n = self.cat_names.len();
        let mut color = vec![WHITE; n];
        for start in 0..n as u32 {
            if color[start as usize] != WHITE {
                continue;
            }
            let mut stack: Vec<(u32, usize)> = vec![(start, 0)];
            let mut path: Vec<u32> = vec![start];
            color[start as usize] = GRAY;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let parents = &self.cat_parents[node as usize];
                if *next < parents.len() {
                    let p = parents[*next];
                    *next += 1;
                    match color[p as usize] {
                        WHITE => {
                            color[p as usize] = GRAY;
                            path.push(p);
                            stack.push((p, 0));
                        }
                        GRAY => {
                            let pos = path.iter().position(|&x| x == p).unwrap();
                            return Some(path[pos..].to_vec());
                        }
                        _ => {}
                    }
                } else {
                    color[node as usize] = BLACK;
                    path.pop();
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_names.len()
    }

    pub fn n_categories(&self) -> usize {
        self.cat_names.len()
    }

    pub fn leaf_name(&self, i: u32) -> &str {
        &self.leaf_names[i as usize]
    }

    pub fn cat_name(&self, c: u32) -> &str {
        &self.cat_names[c as usize]
    }

    pub fn leaf_id(&self, name: &str) -> Option<u32> {
        self.leaf_index.get(name).copied()
    }

    pub fn cat_id(&self, name: &str) -> Option<u32> {
        self.cat_index.get(name).copied()
    }

    /// Category parents of a leaf node.
    pub fn leaf_parents(&self, i: u32) -> &[u32] {
        &self.leaf_parents[i as usize]
    }

    /// Category parents of a category node.
    pub fn cat_parents(&self, c: u32) -> &[u32] {
        &self.cat_parents[c as usize]
    }

    /// Child nodes of a category node.
    pub fn cat_children(&self, c: u32) -> &[NodeId] {
        &self.cat_children[c as usize]
    }

    /// Category parents of any node.
    pub fn parents(&self, node: NodeId) -> &[u32] {
        match node {
            NodeId::Leaf(i) => self.leaf_parents(i),
            NodeId::Cat(c) => self.cat_parents(c),
        }
    }

    /// Child nodes of any node (leaves have none).
    pub fn children(&self, node: NodeId) -> &[NodeId] {
        match node {
            NodeId::Leaf(_) => &[],
            NodeId::Cat(c) => self.cat_children(c),
        }
    }

    /// All nodes, leaves first, ascending.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n_leaves() as u32)
            .map(NodeId::Leaf)
            .chain((0..self.n_categories() as u32).map(NodeId::Cat))
    }

    pub fn node_label(&self, node: NodeId) -> String {
        match node {
            NodeId::Leaf(i) => format!("entity {:?}", self.leaf_name(i)),
            NodeId::Cat(c) => format!("category {:?}", self.cat_name(c)),
        }
    }

    /// The `(child, parent)` edges as given, deduplicated and sorted.
    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    /// Direct construction for tests that need topologies `build` cannot
    /// produce (e.g. a childless category node).
    #[cfg(test)]
    pub(crate) fn raw_for_tests(
        n_leaves: usize,
        leaf_parents: Vec<Vec<u32>>,
        cat_parents: Vec<Vec<u32>>,
        cat_children: Vec<Vec<NodeId>>,
    ) -> Self {
        assert_eq!(leaf_parents.len(), n_leaves);
        assert_eq!(cat_parents.len(), cat_children.len());
        let leaf_names: Vec<String> = (0..n_leaves).map(|i| format!("leaf{i}")).collect();
        let cat_names: Vec<String> = (0..cat_parents.len()).map(|c| format!("cat{c}")).collect();
        EntityGraph {
            leaf_index: leaf_names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect(),
            cat_index: cat_names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect(),
            leaf_names,
            cat_names,
            leaf_parents,
            cat_parents,
            cat_children,
            edges: Vec::new(),
        }
    }
}

/// An ordered list of disjoint node sets; nodes within one set share no
/// parent/child or co-parent adjacency and can be updated together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub sets: Vec<Vec<NodeId>>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Computes the bottom-up conflict-free partition of the node set.
///
/// The first set is exactly the leaves. Each subsequent candidate set is the
/// previous round's deferrals plus the parents of the nodes just placed.
/// Candidates are swept in ascending node order: already-placed nodes are
/// dropped, a node sharing a child with an earlier-kept candidate is deferred
/// to the next round, and parents of a kept or deferred candidate are removed
/// from the running set. An already-placed candidate is dropped without
/// excluding its parents; excluding them there can orphan a node whose
/// children are all placed.
pub fn partition(graph: &EntityGraph) -> Partition {
    let mut sets: Vec<Vec<NodeId>> = Vec::new();
    let mut placed: HashSet<NodeId> = HashSet::new();
    let mut deferred: BTreeSet<NodeId> = BTreeSet::new();
    let mut current: BTreeSet<NodeId> =
        (0..graph.n_leaves() as u32).map(NodeId::Leaf).collect();

    while !current.is_empty() {
        let members: Vec<NodeId> = current.iter().copied().collect();
        placed.extend(members.iter().copied());

        let mut next: BTreeSet<NodeId> = std::mem::take(&mut deferred);
        for &node in &members {
            next.extend(graph.parents(node).iter().map(|&c| NodeId::Cat(c)));
        }

        let mut claimed_children: HashSet<NodeId> = HashSet::new();
        let candidates: Vec<NodeId> = next.iter().copied().collect();
        for node in candidates {
            if !next.contains(&node) {
                continue; // removed as a parent of an earlier candidate
            }
            if placed.contains(&node) {
                next.remove(&node);
                continue;
            }
            let conflict = graph
                .children(node)
                .iter()
                .any(|c| claimed_children.contains(c));
            if conflict {
                next.remove(&node);
                deferred.insert(node);
            } else {
                claimed_children.extend(graph.children(node).iter().copied());
            }
            for &p in graph.parents(node) {
                next.remove(&NodeId::Cat(p));
            }
        }

        sets.push(members);
        current = next;
    }
    Partition { sets }
}

/// A violated partition invariant together with its witnesses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionViolation {
    /// A graph node missing from every set.
    Missing(NodeId),
    /// A node appearing in more than one set (or twice in one).
    Duplicated(NodeId),
    /// A node in the partition that is not in the graph.
    Unknown(NodeId),
    /// A leaf node placed outside the first set.
    LeafOutsideFirstSet(NodeId),
    /// `parent` and `child` share a set.
    ParentChildConflict { set: usize, parent: NodeId, child: NodeId },
    /// `a` and `b` share `child` and a set.
    CoParentConflict { set: usize, a: NodeId, b: NodeId, child: NodeId },
}

impl PartitionViolation {
    pub fn describe(&self, graph: &EntityGraph) -> String {
        match self {
            PartitionViolation::Missing(n) => format!("{} missing from partition", graph.node_label(*n)),
            PartitionViolation::Duplicated(n) => format!("{} placed more than once", graph.node_label(*n)),
            PartitionViolation::Unknown(n) => format!("partition names unknown node {n:?}"),
            PartitionViolation::LeafOutsideFirstSet(n) => {
                format!("{} is a leaf outside the first set", graph.node_label(*n))
            }
            PartitionViolation::ParentChildConflict { set, parent, child } => format!(
                "set {}: {} is a parent of {}",
                set,
                graph.node_label(*parent),
                graph.node_label(*child)
            ),
            PartitionViolation::CoParentConflict { set, a, b, child } => format!(
                "set {}: {} and {} are co-parents of {}",
                set,
                graph.node_label(*a),
                graph.node_label(*b),
                graph.node_label(*child)
            ),
        }
    }
}

/// Checks every partition invariant; the report is empty iff the partition is
/// valid for `graph`.
pub fn check_partition(graph: &EntityGraph, partition: &Partition) -> Vec<PartitionViolation> {
    let mut report = Vec::new();
    let all: BTreeSet<NodeId> = graph.nodes().collect();

    let mut seen: HashMap<NodeId, usize> = HashMap::new();
    for set in &partition.sets {
        for &node in set {
            *seen.entry(node).or_insert(0) += 1;
        }
    }
    for node in &all {
        match seen.get(node) {
            None => report.push(PartitionViolation::Missing(*node)),
            Some(&count) if count > 1 => report.push(PartitionViolation::Duplicated(*node)),
            _ => {}
        }
    }
    let mut unknown: Vec<NodeId> = seen.keys().filter(|n| !all.contains(n)).copied().collect();
    unknown.sort_unstable();
    report.extend(unknown.into_iter().map(PartitionViolation::Unknown));

    let first: HashSet<NodeId> = partition.sets.first().map(|s| s.iter().copied().collect()).unwrap_or_default();
    for i in 0..graph.n_leaves() as u32 {
        let leaf = NodeId::Leaf(i);
        if seen.contains_key(&leaf) && !first.contains(&leaf) {
            report.push(PartitionViolation::LeafOutsideFirstSet(leaf));
        }
    }

    for (set_idx, set) in partition.sets.iter().enumerate() {
        let members: HashSet<NodeId> = set.iter().copied().collect();
        let mut ordered: Vec<NodeId> = set.clone();
        ordered.sort_unstable();
        for &node in &ordered {
            if !all.contains(&node) {
                continue;
            }
            for &p in graph.parents(node) {
                let parent = NodeId::Cat(p);
                if members.contains(&parent) {
                    report.push(PartitionViolation::ParentChildConflict {
                        set: set_idx,
                        parent,
                        child: node,
                    });
                }
            }
            for &child in graph.children(node) {
                for &other in graph.parents(child) {
                    let other = NodeId::Cat(other);
                    if other != node && node < other && members.contains(&other) {
                        report.push(PartitionViolation::CoParentConflict {
                            set: set_idx,
                            a: node,
                            b: other,
                            child,
                        });
                    }
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn graph_of(leaves: &[&str], edges: &[(&str, &str)]) -> EntityGraph {
        EntityGraph::build(leaves, edges).unwrap()
    }

    #[test]
    fn build_poodle_example() {
        let g = graph_of(&["poodle", "dog_word"], &[("poodle", "dog_cat")]);
        assert_eq!(g.n_leaves(), 2);
        assert_eq!(g.n_categories(), 1);
        let poodle = g.leaf_id("poodle").unwrap();
        let dog_cat = g.cat_id("dog_cat").unwrap();
        assert_eq!(g.leaf_parents(poodle), &[dog_cat]);
        assert_eq!(g.cat_children(dog_cat), &[NodeId::Leaf(poodle)]);
        assert!(g.leaf_parents(g.leaf_id("dog_word").unwrap()).is_empty());
    }

    #[test]
    fn build_orphan_leaf() {
        let g = graph_of(&["a"], &[]);
        assert_eq!(g.n_leaves(), 1);
        assert_eq!(g.n_categories(), 0);
        assert!(g.leaf_parents(0).is_empty());
    }

    #[test]
    fn build_rejects_cycle() {
        let err = EntityGraph::build(&["w"], &[("w", "a"), ("a", "b"), ("b", "a")]).unwrap_err();
        match err {
            GraphError::Cycle { path } => {
                assert_eq!(path.first(), path.last());
                assert!(path.len() >= 3, "cycle must name its nodes: {path:?}");
                assert!(path.contains(&"a".to_string()) && path.contains(&"b".to_string()));
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn build_rejects_dangling_and_self_edge() {
        assert_eq!(
            EntityGraph::build(&["a"], &[("ghost", "top")]).unwrap_err(),
            GraphError::DanglingId("ghost".into())
        );
        assert_eq!(
            EntityGraph::build(&["a"], &[("a", "a")]).unwrap_err(),
            GraphError::SelfEdge("a".into())
        );
    }

    #[test]
    fn dual_role_id_owns_two_nodes() {
        // "dog" is both a word and a category; the edge (dog, animal) hangs
        // the animal category above both of dog's nodes.
        let g = graph_of(
            &["poodle", "dog", "mouse"],
            &[("poodle", "dog"), ("dog", "animal"), ("mouse", "animal"), ("mouse", "device")],
        );
        let dog_leaf = g.leaf_id("dog").unwrap();
        let dog_cat = g.cat_id("dog").unwrap();
        let animal = g.cat_id("animal").unwrap();
        assert_eq!(g.leaf_parents(dog_leaf), &[animal]);
        assert_eq!(g.cat_parents(dog_cat), &[animal]);
        assert_eq!(g.leaf_parents(g.leaf_id("mouse").unwrap()).len(), 2);
        let mut animal_children = g.cat_children(animal).to_vec();
        animal_children.sort_unstable();
        assert_eq!(
            animal_children,
            vec![NodeId::Leaf(dog_leaf), NodeId::Leaf(g.leaf_id("mouse").unwrap()), NodeId::Cat(dog_cat)]
        );
    }

    #[test]
    fn partition_orphan_leaf() {
        let g = graph_of(&["u"], &[]);
        let p = partition(&g);
        assert_eq!(p.sets, vec![vec![NodeId::Leaf(0)]]);
        assert!(check_partition(&g, &p).is_empty());
    }

    #[test]
    fn partition_chain() {
        let g = graph_of(&["u"], &[("u", "h1"), ("h1", "h2")]);
        let p = partition(&g);
        let h1 = g.cat_id("h1").unwrap();
        let h2 = g.cat_id("h2").unwrap();
        assert_eq!(
            p.sets,
            vec![vec![NodeId::Leaf(0)], vec![NodeId::Cat(h1)], vec![NodeId::Cat(h2)]]
        );
        assert!(check_partition(&g, &p).is_empty());
    }

    #[test]
    fn partition_diamond_defers_shared_parent() {
        // u1 has parents h1 and h2; u2 has parent h2. h2 must wait a round
        // because h1 claims their shared child u1 first.
        let g = graph_of(&["u1", "u2"], &[("u1", "h1"), ("u1", "h2"), ("u2", "h2")]);
        let p = partition(&g);
        let u1 = g.leaf_id("u1").unwrap();
        let u2 = g.leaf_id("u2").unwrap();
        let h1 = g.cat_id("h1").unwrap();
        let h2 = g.cat_id("h2").unwrap();
        assert_eq!(
            p.sets,
            vec![
                vec![NodeId::Leaf(u1), NodeId::Leaf(u2)],
                vec![NodeId::Cat(h1)],
                vec![NodeId::Cat(h2)],
            ]
        );
        assert!(check_partition(&g, &p).is_empty());
    }

    #[test]
    fn partition_covers_reentrant_placed_candidates() {
        // A placed node can reappear as a candidate (parent of a later-placed
        // child). Dropping its parents at that point would orphan them; this
        // topology exercises exactly that path.
        let g = graph_of(
            &["z", "l1", "l2"],
            &[
                ("z", "m"),
                ("y", "m"),
                ("l1", "w"),
                ("l2", "wp"),
                ("w", "c"),
                ("wp", "y"),
                ("m", "n"),
                ("c", "n"),
            ],
        );
        let p = partition(&g);
        let report = check_partition(&g, &p);
        assert!(report.is_empty(), "{report:?}");
        let total: usize = p.sets.iter().map(Vec::len).sum();
        assert_eq!(total, g.n_leaves() + g.n_categories());
    }

    #[test]
    fn check_partition_flags_planted_violations() {
        let g = graph_of(&["u"], &[("u", "h1"), ("h1", "h2")]);
        let h1 = NodeId::Cat(g.cat_id("h1").unwrap());
        let h2 = NodeId::Cat(g.cat_id("h2").unwrap());
        let u = NodeId::Leaf(0);

        // h1 moved into the leaf set: parent-child conflict with u.
        let bad = Partition { sets: vec![vec![u, h1], vec![h2]] };
        let report = check_partition(&g, &bad);
        assert!(report.contains(&PartitionViolation::ParentChildConflict {
            set: 0,
            parent: h1,
            child: u
        }), "{report:?}");

        // Diamond with h2 moved next to h1: co-parent conflict through u1.
        let g = graph_of(&["u1", "u2"], &[("u1", "h1"), ("u1", "h2"), ("u2", "h2")]);
        let h1 = NodeId::Cat(g.cat_id("h1").unwrap());
        let h2 = NodeId::Cat(g.cat_id("h2").unwrap());
        let bad = Partition {
            sets: vec![vec![NodeId::Leaf(0), NodeId::Leaf(1)], vec![h1, h2]],
        };
        let report = check_partition(&g, &bad);
        assert!(report.contains(&PartitionViolation::CoParentConflict {
            set: 1,
            a: h1,
            b: h2,
            child: NodeId::Leaf(0)
        }), "{report:?}");

        // Missing and duplicated nodes.
        let bad = Partition { sets: vec![vec![NodeId::Leaf(0), NodeId::Leaf(0)], vec![h1]] };
        let report = check_partition(&g, &bad);
        assert!(report.contains(&PartitionViolation::Duplicated(NodeId::Leaf(0))));
        assert!(report.contains(&PartitionViolation::Missing(h2)));
    }

    /// Random layered hierarchies; every partition must verify clean and
    /// place each node exactly once, with leaves exactly in the first set.
    #[test]
    fn partition_random_graphs() {
        let mut rng = crate::rng::stream_rng(29, "test/partition-fuzz", 0);
        for round in 0..60 {
            let n_leaves = rng.random_range(1..40);
            let n_cats = rng.random_range(0..30);
            let mut edges: Vec<(String, String)> = Vec::new();
            let leaf_ids: Vec<String> = (0..n_leaves).map(|i| format!("w{i:03}")).collect();
            let mut live = vec![false; n_cats];
            for i in 0..n_leaves {
                if n_cats == 0 {
                    break;
                }
                for _ in 0..rng.random_range(0..=3usize) {
                    let c = rng.random_range(0..n_cats);
                    live[c] = true;
                    edges.push((format!("w{i:03}"), format!("c{c:03}")));
                }
            }
            for c in 0..n_cats {
                if !live[c] || c + 1 >= n_cats {
                    continue;
                }
                for _ in 0..rng.random_range(0..=3usize) {
                    let p = rng.random_range(c + 1..n_cats);
                    live[p] = true;
                    edges.push((format!("c{c:03}"), format!("c{p:03}")));
                }
            }
            let edge_refs: Vec<(&str, &str)> =
                edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let leaf_refs: Vec<&str> = leaf_ids.iter().map(String::as_str).collect();
            let g = match EntityGraph::build(&leaf_refs, &edge_refs) {
                Ok(g) => g,
                // A cat edge may point at a never-live parent; those ids do
                // exist as parents, so builds only fail on dangling children.
                Err(e) => panic!("round {round}: unexpected build failure {e:?}"),
            };
            let p = partition(&g);
            let report = check_partition(&g, &p);
            assert!(report.is_empty(), "round {round}: {report:?}");
            let total: usize = p.sets.iter().map(Vec::len).sum();
            assert_eq!(total, g.n_leaves() + g.n_categories(), "round {round}");
            if g.n_leaves() > 0 {
                let first: BTreeSet<NodeId> = p.sets[0].iter().copied().collect();
                let leaves: BTreeSet<NodeId> = (0..g.n_leaves() as u32).map(NodeId::Leaf).collect();
                assert_eq!(first, leaves, "round {round}");
            }
        }
    }
}
