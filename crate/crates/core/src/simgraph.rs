//! Directed weighted graph view of a similarity table and its connectivity.
//!
//! Every node carries an implicit zero-weight self-loop. It is never stored in
//! the adjacency lists, so degrees and signatures ignore it.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{check_fraction, sample_indices};
use crate::error::{Error, Result};
use crate::simtable::SimilarityTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SimGraph {
    threshold: u32,
    ids: Vec<String>,
    index: HashMap<String, u32>,
    /// `(target, weight)` sorted by target.
    out_edges: Vec<Vec<(u32, u32)>>,
    /// `(source, weight)` sorted by source.
    in_edges: Vec<Vec<(u32, u32)>>,
}

impl SimGraph {
    fn from_adjacency(threshold: u32, ids: Vec<String>, out_edges: Vec<Vec<(u32, u32)>>) -> Self {
        let mut in_edges = vec![Vec::new(); ids.len()];
        for (src, edges) in out_edges.iter().enumerate() {
            for &(dst, w) in edges {
                in_edges[dst as usize].push((src as u32, w));
            }
        }
        // Sources are visited in ascending order, so in_edges are already sorted.
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        SimGraph {
            threshold,
            ids,
            index,
            out_edges,
            in_edges,
        }
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, node: u32) -> &str {
        &self.ids[node as usize]
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn out_edges(&self, node: u32) -> &[(u32, u32)] {
        &self.out_edges[node as usize]
    }

    pub fn in_edges(&self, node: u32) -> &[(u32, u32)] {
        &self.in_edges[node as usize]
    }

    /// Non-self edges.
    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    /// All nodes have a self-loop; it carries no information.
    pub fn has_self_loop(&self, node: u32) -> bool {
        (node as usize) < self.ids.len()
    }

    pub fn is_singleton(&self, node: u32) -> bool {
        self.out_edges[node as usize].is_empty() && self.in_edges[node as usize].is_empty()
    }

    /// Non-self edges as `(source id, target id, weight)`.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.out_edges.iter().enumerate().flat_map(move |(s, es)| {
            es.iter()
                .map(move |&(t, w)| (self.ids[s].as_str(), self.ids[t as usize].as_str(), w))
        })
    }

    /// Renames every node; `rename` must be injective.
    pub fn relabel(&self, mut rename: impl FnMut(&str) -> String) -> Result<Self> {
        let renamed: Vec<String> = self.ids.iter().map(|s| rename(s)).collect();
        let mut order: Vec<u32> = (0..renamed.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| renamed[a as usize].cmp(&renamed[b as usize]));
        if let Some(w) = order.windows(2).find(|w| renamed[w[0] as usize] == renamed[w[1] as usize]) {
            return Err(Error::InvalidArgument(format!(
                "relabel maps {} and {} to the same id",
                self.ids[w[0] as usize], self.ids[w[1] as usize]
            )));
        }
        let mut new_of_old = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old as usize] = new as u32;
        }
        let ids = order.iter().map(|&o| renamed[o as usize].clone()).collect();
        let out_edges = order
            .iter()
            .map(|&old| {
                let mut es: Vec<(u32, u32)> = self.out_edges[old as usize]
                    .iter()
                    .map(|&(t, w)| (new_of_old[t as usize], w))
                    .collect();
                es.sort_unstable();
                es
            })
            .collect();
        Ok(Self::from_adjacency(self.threshold, ids, out_edges))
    }

    /// Subgraph on the given node indices, which must be sorted and unique.
    pub fn induce_nodes(&self, keep: &[u32]) -> SimGraph {
        let mut new_of_old = vec![u32::MAX; self.ids.len()];
        for (new, &old) in keep.iter().enumerate() {
            new_of_old[old as usize] = new as u32;
        }
        let ids = keep.iter().map(|&o| self.ids[o as usize].clone()).collect();
        let out_edges = keep
            .iter()
            .map(|&old| {
                self.out_edges[old as usize]
                    .iter()
                    .filter_map(|&(t, w)| {
                        let nt = new_of_old[t as usize];
                        (nt != u32::MAX).then_some((nt, w))
                    })
                    .collect()
            })
            .collect();
        Self::from_adjacency(self.threshold, ids, out_edges)
    }
}

/// One node per id in either column, one edge per non-self record.
pub fn build_graph(table: &SimilarityTable) -> SimGraph {
    let ids = table.ids().to_vec();
    let out_edges = (0..ids.len() as u32)
        .map(|i| {
            table
                .row_at(i)
                .unwrap_or(&[])
                .iter()
                .copied()
                .filter(|&(r, _)| r != i)
                .collect()
        })
        .collect();
    SimGraph::from_adjacency(table.threshold(), ids, out_edges)
}

/// Keeps the listed ids and every edge between two of them.
pub fn induce_subgraph<'a>(graph: &SimGraph, keep: impl IntoIterator<Item = &'a str>) -> Result<SimGraph> {
    let mut nodes = keep
        .into_iter()
        .map(|id| graph.index_of(id).ok_or_else(|| Error::UnknownId(id.to_string())))
        .collect::<Result<Vec<u32>>>()?;
    nodes.sort_unstable();
    nodes.dedup();
    Ok(graph.induce_nodes(&nodes))
}

/// Uniform node sample, nested across fractions for a fixed seed.
pub fn sample_subgraph(graph: &SimGraph, fraction: f64, seed: u64) -> Result<SimGraph> {
    let keep: Vec<u32> = sample_indices(graph.len(), fraction, seed)?
        .into_iter()
        .map(|i| i as u32)
        .collect();
    Ok(graph.induce_nodes(&keep))
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }

    pub fn component_size(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentStats {
    pub n_nodes: usize,
    pub num_singletons: usize,
    /// Sizes of the weakly connected components with at least two nodes,
    /// largest first.
    pub component_sizes: Vec<usize>,
    pub giant_fraction: f64,
    pub singleton_fraction: f64,
}

impl ComponentStats {
    pub fn n_components(&self) -> usize {
        self.component_sizes.len()
    }

    /// Share of nodes that are singletons or in the giant component.
    pub fn singleton_or_giant_fraction(&self) -> f64 {
        if self.n_nodes == 0 {
            return 0.0;
        }
        let giant = self.component_sizes.first().copied().unwrap_or(0);
        (self.num_singletons + giant) as f64 / self.n_nodes as f64
    }

    pub fn summary(&self) -> ComponentSummary {
        ComponentSummary {
            n_nodes: self.n_nodes,
            n_singletons: self.num_singletons,
            singleton_fraction: self.singleton_fraction,
            component_sizes_top10: self.component_sizes.iter().take(10).copied().collect(),
            giant_fraction: self.giant_fraction,
            n_components: self.n_components(),
            singleton_or_giant_fraction: self.singleton_or_giant_fraction(),
        }
    }
}

/// JSON form of `ComponentStats`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub n_nodes: usize,
    pub n_singletons: usize,
    pub singleton_fraction: f64,
    pub component_sizes_top10: Vec<usize>,
    pub giant_fraction: f64,
    pub n_components: usize,
    pub singleton_or_giant_fraction: f64,
}

/// Weakly connected components over non-self edges.
pub fn components(graph: &SimGraph) -> ComponentStats {
    let n = graph.len();
    let mut dsu = DisjointSet::new(n);
    for (s, es) in graph.out_edges.iter().enumerate() {
        for &(t, _) in es {
            dsu.union(s as u32, t);
        }
    }
    let mut num_singletons = 0;
    let mut sizes = Vec::new();
    for v in 0..n as u32 {
        if graph.is_singleton(v) {
            num_singletons += 1;
        } else if dsu.find(v) == v {
            sizes.push(dsu.component_size(v) as usize);
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let frac = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    ComponentStats {
        n_nodes: n,
        num_singletons,
        giant_fraction: frac(sizes.first().copied().unwrap_or(0)),
        singleton_fraction: frac(num_singletons),
        component_sizes: sizes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub n_nodes: usize,
    pub singleton_fraction: f64,
    pub giant_fraction: f64,
}

/// Component statistics over seeded node samples of `graph`.
pub fn connectivity_sweep(graph: &SimGraph, fractions: &[f64], seed: u64) -> Result<Vec<SweepRow>> {
    for &f in fractions {
        check_fraction(f)?;
    }
    fractions
        .iter()
        .map(|&fraction| {
            let stats = components(&sample_subgraph(graph, fraction, seed)?);
            Ok(SweepRow {
                fraction,
                n_nodes: stats.n_nodes,
                singleton_fraction: stats.singleton_fraction,
                giant_fraction: stats.giant_fraction,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "fraction,n_nodes,singleton_fraction,giant_fraction")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6}",
            r.fraction, r.n_nodes, r.singleton_fraction, r.giant_fraction
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv_file(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_sweep_csv(rows, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simtable::IdKind;

    /// The example graph: EDMUND-JONES and EDMONDS-WILSON only receive edges.
    pub(crate) fn example_table() -> SimilarityTable {
        SimilarityTable::from_records(
            25,
            IdKind::Plaintext,
            [
                ("EDMUND", "EDMONDS", 17),
                ("EDMUND", "EDMUND-JONES", 5),
                ("EDMONDS", "EDMUND", 8),
                ("EDMONDS", "EDMONDS-WILSON", 12),
                ("EDMUND-JONES", "EDMUND-JONES", 0),
                ("EDMONDS-WILSON", "EDMONDS-WILSON", 0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn example_graph_has_two_sinks() {
        let g = build_graph(&example_table());
        assert_eq!(g.len(), 4);
        assert_eq!(g.edge_count(), 4);
        let sinks: Vec<&str> = (0..4)
            .filter(|&v| g.out_edges(v).is_empty())
            .map(|v| g.id(v))
            .collect();
        assert_eq!(sinks, ["EDMONDS-WILSON", "EDMUND-JONES"]);
        let stats = components(&g);
        assert_eq!(stats.component_sizes, vec![4]);
        assert_eq!(stats.num_singletons, 0);
        assert_eq!(stats.giant_fraction, 1.0);
    }

    #[test]
    fn self_only_table_is_all_singletons() {
        let t = SimilarityTable::from_records(25, IdKind::Plaintext, [("A", "A", 0), ("B", "B", 0)]).unwrap();
        let g = build_graph(&t);
        assert_eq!(g.edge_count(), 0);
        let stats = components(&g);
        assert_eq!(stats.num_singletons, 2);
        assert!(stats.component_sizes.is_empty());
        assert_eq!(stats.giant_fraction, 0.0);
        assert!(g.has_self_loop(0) && g.has_self_loop(1));
    }

    #[test]
    fn right_only_ids_become_nodes() {
        let t = SimilarityTable::from_records(25, IdKind::Plaintext, [("A", "Z", 3)]).unwrap();
        let g = build_graph(&t);
        assert_eq!(g.ids(), ["A", "Z"]);
        assert_eq!(g.in_edges(1), &[(0, 3)]);
    }

    #[test]
    fn six_node_adjacency() {
        let t = SimilarityTable::from_records(
            25,
            IdKind::Plaintext,
            [
                ("A", "B", 10),
                ("B", "A", 12),
                ("B", "C", 20),
                ("C", "D", 5),
                ("E", "F", 25),
                ("F", "F", 0),
                ("D", "D", 0),
            ],
        )
        .unwrap();
        let g = build_graph(&t);
        let idx = |s: &str| g.index_of(s).unwrap();
        assert_eq!(g.out_edges(idx("B")), &[(idx("A"), 12), (idx("C"), 20)]);
        assert_eq!(g.in_edges(idx("A")), &[(idx("B"), 12)]);
        assert_eq!(g.in_edges(idx("D")), &[(idx("C"), 5)]);
        assert_eq!(g.out_edges(idx("D")), &[]);
        assert_eq!(g.in_edges(idx("F")), &[(idx("E"), 25)]);
        let stats = components(&g);
        assert_eq!(stats.component_sizes, vec![4, 2]);
        assert_eq!(stats.num_singletons, 0);
    }

    #[test]
    fn induce_keeps_internal_edges() {
        let g = build_graph(&example_table());
        let all: Vec<&str> = g.ids().iter().map(String::as_str).collect();
        assert_eq!(induce_subgraph(&g, all).unwrap(), g);
        let one = induce_subgraph(&g, ["EDMUND"]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.edge_count(), 0);
        assert!(components(&one).num_singletons == 1);
        let two = induce_subgraph(&g, ["EDMUND", "EDMONDS"]).unwrap();
        assert_eq!(two.edge_count(), 2);
        assert!(matches!(induce_subgraph(&g, ["NOPE"]), Err(Error::UnknownId(_))));
    }

    #[test]
    fn relabel_preserves_structure() {
        let g = build_graph(&example_table());
        let r = g.relabel(|s| s.to_lowercase()).unwrap();
        let mut a: Vec<_> = g.edges().map(|(s, t, w)| (s.to_lowercase(), t.to_lowercase(), w)).collect();
        let mut b: Vec<_> = r.edges().map(|(s, t, w)| (s.to_string(), t.to_string(), w)).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!(g.relabel(|_| "same".into()).is_err());
    }

    #[test]
    fn disjoint_set_basics() {
        let mut d = DisjointSet::new(5);
        assert!(d.union(0, 1));
        assert!(d.union(3, 4));
        assert!(!d.union(1, 0));
        assert_eq!(d.find(0), d.find(1));
        assert_ne!(d.find(1), d.find(3));
        assert_eq!(d.component_size(4), 2);
        assert_eq!(d.component_size(2), 1);
    }

    #[test]
    fn sweep_csv_shape() {
        let g = build_graph(&example_table());
        let rows = connectivity_sweep(&g, &[0.5, 1.0], 3).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "fraction,n_nodes,singleton_fraction,giant_fraction");
        assert_eq!(lines[2], "1,4,0.000000,1.000000");
        assert!(connectivity_sweep(&g, &[0.0], 3).is_err());
    }
}
