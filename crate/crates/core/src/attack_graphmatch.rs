//! Seed-and-propagate matching of a sampled plaintext subgraph into the full
//! tagged similarity graph.
//!
//! Seeding pairs nodes whose in/out weight multisets single out one compatible
//! node on the other side. Propagation then walks out-edges from matched pairs:
//! a weight shared by exactly one unmatched edge on each side pins the target,
//! and when several edges share a weight the targets' own signatures break the
//! tie. Ground truth is only read by [`evaluate`].

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Name;
use crate::error::{Error, Result};
use crate::pseudonym::{generate_key, tag};
use crate::simgraph::{build_graph, sample_subgraph, SimGraph};
use crate::simtable::{IdKind, SimilarityTable};

/// In and out weight multisets of a node, self-loop excluded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NodeSignature {
    pub out_weights: Vec<u32>,
    pub in_weights: Vec<u32>,
}

/// Is sorted `small` a sub-multiset of sorted `big`?
fn multiset_within(small: &[u32], big: &[u32]) -> bool {
    if small.len() > big.len() {
        return false;
    }
    let mut j = 0;
    for &x in small {
        while j < big.len() && big[j] < x {
            j += 1;
        }
        if j == big.len() || big[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

impl NodeSignature {
    /// Pairwise multiset containment.
    pub fn within(&self, other: &NodeSignature) -> bool {
        multiset_within(&self.out_weights, &other.out_weights)
            && multiset_within(&self.in_weights, &other.in_weights)
    }

    pub fn is_empty(&self) -> bool {
        self.out_weights.is_empty() && self.in_weights.is_empty()
    }
}

fn signature_at(graph: &SimGraph, node: u32) -> NodeSignature {
    let weights = |edges: &[(u32, u32)]| {
        let mut w: Vec<u32> = edges.iter().map(|&(_, w)| w).collect();
        w.sort_unstable();
        w
    };
    NodeSignature {
        out_weights: weights(graph.out_edges(node)),
        in_weights: weights(graph.in_edges(node)),
    }
}

pub fn node_signature(graph: &SimGraph, id: &str) -> Result<NodeSignature> {
    let node = graph.index_of(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
    Ok(signature_at(graph, node))
}

fn signatures(graph: &SimGraph) -> Vec<NodeSignature> {
    (0..graph.len() as u32)
        .into_par_iter()
        .map(|v| signature_at(graph, v))
        .collect()
}

fn signature_counts(sigs: &[NodeSignature]) -> HashMap<&NodeSignature, u32> {
    let mut counts = HashMap::new();
    for s in sigs {
        *counts.entry(s).or_insert(0) += 1;
    }
    counts
}

/// How a unique subgraph signature is checked against the full graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// The full node must carry the identical signature, and no other may.
    Equality,
    /// The full node's signature must contain the subgraph signature, and no
    /// other may.
    #[default]
    Containment,
}

/// Signature lookups over the full graph, built once and shared by every
/// subgraph matched against it.
#[derive(Debug)]
pub struct GraphIndex<'a> {
    graph: &'a SimGraph,
    sigs: Vec<NodeSignature>,
    /// Node carrying each signature, or `None` when several do.
    by_signature: HashMap<NodeSignature, Option<u32>>,
    /// Nodes with at least one edge of the given weight, per direction.
    postings: [HashMap<u32, Vec<u32>>; 2],
}

impl<'a> GraphIndex<'a> {
    pub fn new(graph: &'a SimGraph) -> Self {
        let sigs = signatures(graph);
        let mut by_signature: HashMap<NodeSignature, Option<u32>> = HashMap::new();
        let mut postings: [HashMap<u32, Vec<u32>>; 2] = Default::default();
        for (v, s) in sigs.iter().enumerate() {
            let v = v as u32;
            by_signature
                .entry(s.clone())
                .and_modify(|e| *e = None)
                .or_insert(Some(v));
            for (dir, ws) in [&s.out_weights, &s.in_weights].into_iter().enumerate() {
                let mut last = None;
                for &w in ws {
                    if last != Some(w) {
                        postings[dir].entry(w).or_default().push(v);
                        last = Some(w);
                    }
                }
            }
        }
        GraphIndex {
            graph,
            sigs,
            by_signature,
            postings,
        }
    }

    pub fn graph(&self) -> &SimGraph {
        self.graph
    }

    /// The only node compatible with `sig`, if exactly one is. The scan stops
    /// at the second compatible node.
    fn sole_candidate(&self, sig: &NodeSignature, strategy: Strategy) -> Option<u32> {
        match strategy {
            Strategy::Equality => self.by_signature.get(sig).copied().flatten(),
            Strategy::Containment => {
                let shortest = [&sig.out_weights, &sig.in_weights]
                    .into_iter()
                    .enumerate()
                    .flat_map(|(dir, ws)| ws.iter().map(move |&w| (dir, w)))
                    .map(|(dir, w)| self.postings[dir].get(&w).map_or(&[][..], Vec::as_slice))
                    .min_by_key(|p| p.len());
                let mut found = None;
                let mut consider = |v: u32| -> bool {
                    if sig.within(&self.sigs[v as usize]) {
                        if found.is_some() {
                            found = None;
                            return false;
                        }
                        found = Some(v);
                    }
                    true
                };
                match shortest {
                    Some(list) => {
                        for &v in list {
                            if !consider(v) {
                                return None;
                            }
                        }
                    }
                    None => {
                        for v in 0..self.graph.len() as u32 {
                            if !consider(v) {
                                return None;
                            }
                        }
                    }
                }
                found
            }
        }
    }
}

/// Partial injective mapping from subgraph nodes to full-graph nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchState {
    forward: Vec<Option<u32>>,
    backward: Vec<Option<u32>>,
    /// Assigned subgraph nodes waiting to be expanded.
    pub frontier: VecDeque<u32>,
    /// Completed propagation passes.
    pub iteration: u32,
    pub unique_in_subgraph: usize,
    pub unique_in_simgraph: usize,
    pub seeds: usize,
}

impl MatchState {
    pub fn new(sub_nodes: usize, full_nodes: usize) -> Self {
        MatchState {
            forward: vec![None; sub_nodes],
            backward: vec![None; full_nodes],
            frontier: VecDeque::new(),
            iteration: 0,
            unique_in_subgraph: 0,
            unique_in_simgraph: 0,
            seeds: 0,
        }
    }

    pub fn get(&self, sub_node: u32) -> Option<u32> {
        self.forward[sub_node as usize]
    }

    pub fn is_full_assigned(&self, full_node: u32) -> bool {
        self.backward[full_node as usize].is_some()
    }

    pub fn len(&self) -> usize {
        self.forward.iter().filter(|f| f.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(sub node, full node)` pairs in subgraph order.
    pub fn assignments(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.forward
            .iter()
            .enumerate()
            .filter_map(|(s, f)| f.map(|f| (s as u32, f)))
    }

    /// Records `sub -> full` and queues `sub`. Returns whether it was new.
    pub fn assign(&mut self, sub: u32, full: u32) -> Result<bool> {
        match (self.forward[sub as usize], self.backward[full as usize]) {
            (Some(f), _) if f == full => Ok(false),
            (None, None) => {
                self.forward[sub as usize] = Some(full);
                self.backward[full as usize] = Some(sub);
                self.frontier.push_back(sub);
                Ok(true)
            }
            (f, s) => Err(Error::Contradiction(format!(
                "subgraph node {sub} -> full node {full}, but existing mapping is {f:?} / {s:?}"
            ))),
        }
    }

    /// Assignments as id pairs, for reporting.
    pub fn id_pairs<'g>(&self, sub: &'g SimGraph, full: &'g SimGraph) -> BTreeMap<&'g str, &'g str> {
        self.assignments().map(|(s, f)| (sub.id(s), full.id(f))).collect()
    }
}

fn check_thresholds(sub: &SimGraph, full: &SimGraph) -> Result<()> {
    if sub.threshold() != full.threshold() {
        return Err(Error::ThresholdMismatch {
            left: sub.threshold(),
            right: full.threshold(),
        });
    }
    Ok(())
}

/// Seeds a fresh state from signatures unique within `sub`.
pub fn seed_matches(sub: &SimGraph, full: &SimGraph, strategy: Strategy) -> Result<MatchState> {
    seed_with_index(sub, &GraphIndex::new(full), strategy)
}

pub fn seed_with_index(sub: &SimGraph, full: &GraphIndex<'_>, strategy: Strategy) -> Result<MatchState> {
    check_thresholds(sub, full.graph)?;
    let sigs = signatures(sub);
    let counts = signature_counts(&sigs);
    let unique: Vec<u32> = (0..sub.len() as u32)
        .filter(|&v| counts[&sigs[v as usize]] == 1)
        .collect();
    let picks: Vec<(u32, Option<u32>)> = unique
        .par_iter()
        .map(|&v| (v, full.sole_candidate(&sigs[v as usize], strategy)))
        .collect();
    let mut state = MatchState::new(sub.len(), full.graph.len());
    state.unique_in_subgraph = unique.len();
    for (v, pick) in picks {
        if let Some(f) = pick {
            state.unique_in_simgraph += 1;
            state.assign(v, f)?;
        }
    }
    state.seeds = state.len();
    Ok(state)
}

/// Expands `state` along out-edges until a full pass adds nothing.
pub fn propagate(sub: &SimGraph, full: &SimGraph, state: MatchState) -> Result<MatchState> {
    propagate_with_index(sub, &GraphIndex::new(full), state)
}

pub fn propagate_with_index(sub: &SimGraph, full: &GraphIndex<'_>, mut state: MatchState) -> Result<MatchState> {
    check_thresholds(sub, full.graph)?;
    let sub_sigs = signatures(sub);
    let fg = full.graph;
    loop {
        let mut changed = false;
        // Every pass revisits all matched nodes: a neighbourhood that was
        // ambiguous can resolve once some of its targets are matched.
        let mut queue: VecDeque<u32> = state.assignments().map(|(s, _)| s).collect();
        state.frontier.clear();
        while let Some(u) = queue.pop_front() {
            let big_u = state.get(u).expect("queued nodes are assigned");
            let mut sub_groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
            for &(t, w) in sub.out_edges(u) {
                if state.get(t).is_none() {
                    sub_groups.entry(w).or_default().push(t);
                }
            }
            if sub_groups.is_empty() {
                continue;
            }
            let mut full_groups: HashMap<u32, Vec<u32>> = HashMap::new();
            for &(t, w) in fg.out_edges(big_u) {
                if !state.is_full_assigned(t) && sub_groups.contains_key(&w) {
                    full_groups.entry(w).or_default().push(t);
                }
            }
            for (w, targets) in &sub_groups {
                let Some(candidates) = full_groups.get(w) else { continue };
                let mut picks: Vec<(u32, u32)> = Vec::new();
                for &t in targets {
                    if state.get(t).is_some() {
                        continue;
                    }
                    let sig = &sub_sigs[t as usize];
                    let mut compatible = candidates
                        .iter()
                        .copied()
                        .filter(|&c| !state.is_full_assigned(c) && sig.within(&full.sigs[c as usize]));
                    if let (Some(c), None) = (compatible.next(), compatible.next()) {
                        picks.push((t, c));
                    }
                }
                // Two targets settling on the same candidate is ambiguity, not
                // evidence; leave both for a later pass.
                let mut claimed: HashMap<u32, u32> = HashMap::new();
                for &(_, c) in &picks {
                    *claimed.entry(c).or_insert(0) += 1;
                }
                for (t, c) in picks {
                    if claimed[&c] > 1 {
                        continue;
                    }
                    if state.assign(t, c)? {
                        queue.push_back(t);
                        changed = true;
                    }
                }
            }
        }
        state.iteration += 1;
        if !changed {
            break;
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub sample_fraction: f64,
    pub subgraph_nodes: usize,
    pub unique_in_subgraph: usize,
    pub unique_in_simgraph: usize,
    pub matches: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    /// `matches / subgraph_nodes`, as a fraction.
    pub pct_recovered: f64,
    pub passes: u32,
}

/// Scores `state` against ground truth: a match is a true positive when both
/// ids stand for the same name.
pub fn evaluate(
    state: &MatchState,
    sub: &SimGraph,
    full: &SimGraph,
    truth_sub: &HashMap<String, String>,
    truth_full: &HashMap<String, String>,
    sample_fraction: f64,
) -> Result<EvalReport> {
    let mut tp = 0;
    let mut fp = 0;
    for (s, f) in state.assignments() {
        let (sid, fid) = (sub.id(s), full.id(f));
        let a = truth_sub.get(sid).ok_or_else(|| Error::MissingTruth(sid.to_string()))?;
        let b = truth_full.get(fid).ok_or_else(|| Error::MissingTruth(fid.to_string()))?;
        if a == b {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    let matches = tp + fp;
    Ok(EvalReport {
        sample_fraction,
        subgraph_nodes: sub.len(),
        unique_in_subgraph: state.unique_in_subgraph,
        unique_in_simgraph: state.unique_in_simgraph,
        matches,
        true_positives: tp,
        false_positives: fp,
        pct_recovered: if sub.is_empty() { 0.0 } else { matches as f64 / sub.len() as f64 },
        passes: state.iteration,
    })
}

/// Samples the plaintext table at each fraction, tags the full graph under a
/// seeded 256-bit key, and runs seeding plus propagation on every sample.
pub fn run_experiment(
    table: &SimilarityTable,
    fractions: &[f64],
    seed: u64,
    strategy: Strategy,
) -> Result<Vec<EvalReport>> {
    if table.id_kind() != IdKind::Plaintext {
        return Err(Error::IdKindMismatch {
            expected: IdKind::Plaintext.as_str(),
            actual: table.id_kind().as_str(),
        });
    }
    for &f in fractions {
        crate::corpus::check_fraction(f)?;
    }
    let plain = build_graph(table);
    let key = generate_key(256, Some(seed))?;
    let mut truth_full = HashMap::with_capacity(plain.len());
    let full = plain.relabel(|id| {
        let t = match Name::new(id) {
            Ok(n) => tag(&n, &key).to_string(),
            Err(_) => format!("untaggable:{id}"),
        };
        truth_full.insert(t.clone(), id.to_string());
        t
    })?;
    let truth_sub: HashMap<String, String> = plain.ids().iter().map(|s| (s.clone(), s.clone())).collect();
    let index = GraphIndex::new(&full);
    fractions
        .par_iter()
        .map(|&fraction| {
            let sub = sample_subgraph(&plain, fraction, seed)?;
            let state = seed_with_index(&sub, &index, strategy)?;
            let state = propagate_with_index(&sub, &index, state).map_err(|e| match e {
                Error::Contradiction(msg) => Error::Contradiction(format!("at fraction {fraction}: {msg}")),
                other => other,
            })?;
            evaluate(&state, &sub, &full, &truth_sub, &truth_full, fraction)
        })
        .collect()
}

pub fn write_report_csv(reports: &[EvalReport], mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "sample_size,subgraph_nodes,unique_in_subgraph,unique_in_similarity_graph,matches,true_positives,false_positives,pct_recovered"
    )?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6}",
            r.sample_fraction,
            r.subgraph_nodes,
            r.unique_in_subgraph,
            r.unique_in_simgraph,
            r.matches,
            r.true_positives,
            r.false_positives,
            r.pct_recovered
        )?;
    }
    Ok(())
}
