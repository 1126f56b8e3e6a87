use std::collections::{BTreeMap, BTreeSet, VecDeque};

use linkleak::simgraph::{build_graph, components, sample_subgraph, SimGraph};
use linkleak::simtable::{IdKind, SimilarityTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn node(i: usize) -> String {
    format!("N{i:05}")
}

fn random_table(n: usize, n_edges: usize, seed: u64) -> SimilarityTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for _ in 0..n_edges {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            edges.insert((a, b), rng.random_range(1..=25));
        }
    }
    let selfs = (0..n).map(|i| (node(i), node(i), 0));
    let rest = edges.into_iter().map(|((a, b), w)| (node(a), node(b), w));
    SimilarityTable::from_records(25, IdKind::Plaintext, selfs.chain(rest)).unwrap()
}

/// Component sizes by breadth-first search over the undirected shadow.
/// Returns (singletons, sizes of components with two or more nodes, descending).
fn bfs_components(graph: &SimGraph) -> (usize, Vec<usize>) {
    let n = graph.len();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for v in 0..n as u32 {
        for &(t, _) in graph.out_edges(v) {
            if t != v {
                adj[v as usize].push(t);
                adj[t as usize].push(v);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut singletons = 0;
    let mut sizes = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &t in &adj[v] {
                if !seen[t as usize] {
                    seen[t as usize] = true;
                    queue.push_back(t as usize);
                }
            }
        }
        if size == 1 {
            singletons += 1;
        } else {
            sizes.push(size);
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    (singletons, sizes)
}

fn edge_set(graph: &SimGraph) -> BTreeSet<(String, String, u32)> {
    graph
        .edges()
        .map(|(a, b, w)| (a.to_string(), b.to_string(), w))
        .collect()
}

proptest! {
    #[test]
    fn components_agree_with_bfs(n in 1usize..80, density in 0usize..3, seed in any::<u64>()) {
        let graph = build_graph(&random_table(n, n * density / 2 + 1, seed));
        let stats = components(&graph);
        let (singletons, sizes) = bfs_components(&graph);
        prop_assert_eq!(stats.num_singletons, singletons);
        prop_assert_eq!(&stats.component_sizes, &sizes);
        prop_assert_eq!(stats.num_singletons + sizes.iter().sum::<usize>(), n);
    }

    #[test]
    fn samples_are_induced_and_nested(seed in any::<u64>(), lo in 1u32..5, hi in 5u32..10) {
        let graph = build_graph(&random_table(40, 60, seed));
        let small = sample_subgraph(&graph, lo as f64 / 10.0, seed).unwrap();
        let large = sample_subgraph(&graph, hi as f64 / 10.0, seed).unwrap();
        let small_ids: BTreeSet<&String> = small.ids().iter().collect();
        let large_ids: BTreeSet<&String> = large.ids().iter().collect();
        prop_assert!(small_ids.is_subset(&large_ids));
    }
}

#[test]
fn components_match_bfs_on_large_sparse_graph() {
    let graph = build_graph(&random_table(10_000, 6_000, 11));
    let stats = components(&graph);
    let (singletons, sizes) = bfs_components(&graph);
    assert_eq!(stats.num_singletons, singletons);
    assert_eq!(stats.component_sizes, sizes);
    assert!(stats.num_singletons > 0 && stats.n_components() > 1);
}

#[test]
fn sixty_percent_sample_keeps_exactly_the_internal_edges() {
    let graph = build_graph(&random_table(100, 250, 3));
    let sub = sample_subgraph(&graph, 0.6, 9).unwrap();
    assert_eq!(sub.len(), 60);
    let kept: BTreeSet<&str> = sub.ids().iter().map(String::as_str).collect();
    let expected: BTreeSet<(String, String, u32)> = edge_set(&graph)
        .into_iter()
        .filter(|(a, b, _)| kept.contains(a.as_str()) && kept.contains(b.as_str()))
        .collect();
    assert_eq!(edge_set(&sub), expected);
    for v in 0..sub.len() as u32 {
        assert!(sub.has_self_loop(v));
    }
}

#[test]
fn sampling_is_deterministic() {
    let graph = build_graph(&random_table(100, 250, 3));
    let a = sample_subgraph(&graph, 0.35, 5).unwrap();
    let b = sample_subgraph(&graph, 0.35, 5).unwrap();
    assert_eq!(a.ids(), b.ids());
    assert_eq!(edge_set(&a), edge_set(&b));
}
