//! Row-fingerprint attacks on a published similarity table.
//!
//! A row's fingerprint is the sorted list of its non-self scores. It survives
//! tagging unchanged, so an attacker who rebuilds the table from a plaintext
//! name list can line rows up by fingerprint. [`chain_recovery`] grows a single
//! known tag/name pair outwards through neighbouring rows, and
//! [`frequency_attack`] aligns tag counts with public name counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::FrequencyTable;
use crate::error::{Error, Result};
use crate::pseudonym::Tag;
use crate::simtable::{IdKind, SimilarityTable};

/// Ascending non-self scores of one row.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(Vec<u32>);

impl Fingerprint {
    pub fn from_scores(mut scores: Vec<u32>) -> Self {
        scores.sort_unstable();
        Fingerprint(scores)
    }

    pub fn scores(&self) -> &[u32] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn row_fingerprint(table: &SimilarityTable, idx: u32) -> Option<Fingerprint> {
    table.row_at(idx).map(|row| {
        Fingerprint::from_scores(row.iter().filter(|&&(r, _)| r != idx).map(|&(_, s)| s).collect())
    })
}

/// Fingerprint of a left id.
pub fn fingerprint(table: &SimilarityTable, id: &str) -> Result<Fingerprint> {
    let idx = table.index_of(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
    row_fingerprint(table, idx).ok_or_else(|| Error::UnknownId(format!("{id} has no row")))
}

/// Fingerprints indexed like `table.ids()`; `None` for right-only ids.
pub fn fingerprints(table: &SimilarityTable) -> Vec<Option<Fingerprint>> {
    (0..table.ids().len() as u32)
        .into_par_iter()
        .map(|i| row_fingerprint(table, i))
        .collect()
}

fn fingerprint_counts(fps: &[Option<Fingerprint>]) -> HashMap<&Fingerprint, u32> {
    let mut counts = HashMap::new();
    for fp in fps.iter().flatten() {
        *counts.entry(fp).or_insert(0) += 1;
    }
    counts
}

/// Unique fingerprint to row index, for every fingerprint seen exactly once.
fn unique_index(fps: &[Option<Fingerprint>]) -> HashMap<&Fingerprint, u32> {
    let counts = fingerprint_counts(fps);
    fps.iter()
        .enumerate()
        .filter_map(|(i, fp)| fp.as_ref().map(|fp| (fp, i as u32)))
        .filter(|(fp, _)| counts[fp] == 1)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Uniqueness {
    /// Left ids, i.e. rows.
    pub n_rows: usize,
    /// All ids, including right-only ones.
    pub n_ids: usize,
    pub unique_ids: BTreeSet<String>,
}

impl Uniqueness {
    pub fn n_unique(&self) -> usize {
        self.unique_ids.len()
    }

    /// Share of rows whose fingerprint no other row has.
    pub fn rate(&self) -> f64 {
        ratio(self.n_unique(), self.n_rows)
    }

    /// Same count over every id in the table.
    pub fn rate_over_all_ids(&self) -> f64 {
        ratio(self.n_unique(), self.n_ids)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn uniqueness_rate(table: &SimilarityTable) -> Uniqueness {
    let fps = fingerprints(table);
    Uniqueness {
        n_rows: table.num_left(),
        n_ids: table.ids().len(),
        unique_ids: unique_index(&fps)
            .into_values()
            .map(|i| table.id(i).to_string())
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Recovered {
    pub name: String,
    /// 0 for seeds, otherwise the round that produced the assignment.
    pub iteration: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecoveryResult {
    /// Tag to recovered name; injective.
    pub assignments: BTreeMap<String, Recovered>,
    /// Rows of the tagged table with a unique fingerprint.
    pub n_unique: usize,
    pub n_rows: usize,
    /// Rounds run, including the final one that found nothing new.
    pub iterations: u32,
    /// New assignments per round, starting at round 1.
    pub per_iteration: Vec<usize>,
}

impl RecoveryResult {
    pub fn n_recovered(&self) -> usize {
        self.assignments.len()
    }

    pub fn uniqueness_rate(&self) -> f64 {
        ratio(self.n_unique, self.n_rows)
    }

    pub fn summary(&self) -> RecoverySummary {
        RecoverySummary {
            n_rows: self.n_rows,
            n_unique: self.n_unique,
            uniqueness_rate: self.uniqueness_rate(),
            n_recovered: self.n_recovered(),
            iterations: self.iterations,
            per_iteration: self.per_iteration.clone(),
        }
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["tag", "recovered_name", "iteration"])?;
        for (tag, r) in &self.assignments {
            w.write_record([tag.as_str(), r.name.as_str(), &r.iteration.to_string()])?;
        }
        w.flush()
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoverySummary {
    pub n_rows: usize,
    pub n_unique: usize,
    pub uniqueness_rate: f64,
    pub n_recovered: usize,
    pub iterations: u32,
    pub per_iteration: Vec<usize>,
}

fn check_pair(tagged: &SimilarityTable, rebuilt: &SimilarityTable) -> Result<()> {
    if tagged.threshold() != rebuilt.threshold() {
        return Err(Error::ThresholdMismatch {
            left: tagged.threshold(),
            right: rebuilt.threshold(),
        });
    }
    for (table, expected) in [(tagged, IdKind::Tagged), (rebuilt, IdKind::Plaintext)] {
        if table.id_kind() != expected {
            return Err(Error::IdKindMismatch {
                expected: expected.as_str(),
                actual: table.id_kind().as_str(),
            });
        }
    }
    Ok(())
}

/// Pairs each tagged row with a rebuilt row when both fingerprints are unique
/// in their own tables and equal.
pub fn match_fingerprints(tagged: &SimilarityTable, rebuilt: &SimilarityTable) -> Result<RecoveryResult> {
    check_pair(tagged, rebuilt)?;
    let tagged_fps = fingerprints(tagged);
    let rebuilt_fps = fingerprints(rebuilt);
    let tagged_unique = unique_index(&tagged_fps);
    let rebuilt_unique = unique_index(&rebuilt_fps);
    let assignments: BTreeMap<String, Recovered> = tagged_unique
        .iter()
        .filter_map(|(fp, &t)| {
            rebuilt_unique.get(fp).map(|&r| {
                let rec = Recovered {
                    name: rebuilt.id(r).to_string(),
                    iteration: 1,
                };
                (tagged.id(t).to_string(), rec)
            })
        })
        .collect();
    let found = usize::from(!assignments.is_empty());
    Ok(RecoveryResult {
        n_unique: tagged_unique.len(),
        n_rows: tagged.num_left(),
        iterations: 1,
        per_iteration: vec![assignments.len(); found],
        assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyGuess {
    /// 1-based.
    pub rank: usize,
    pub tag: Tag,
    pub name: String,
    pub tag_count: u64,
    pub name_count: u64,
}

/// Counts occurrences of each tag.
pub fn count_tags<'a>(tags: impl IntoIterator<Item = &'a Tag>) -> HashMap<Tag, u64> {
    let mut counts = HashMap::new();
    for t in tags {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}

/// Lines the `top_k` most frequent tags up with the `top_k` most frequent
/// names. Tags with equal counts are ordered by tag, names by name.
pub fn frequency_attack(
    tag_counts: &HashMap<Tag, u64>,
    freq: &FrequencyTable,
    top_k: usize,
) -> Result<Vec<FrequencyGuess>> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    if tag_counts.is_empty() || freq.is_empty() {
        return Err(Error::InvalidArgument("frequency attack needs tags and name frequencies".into()));
    }
    let mut tags: Vec<(&Tag, u64)> = tag_counts.iter().map(|(t, &c)| (t, c)).collect();
    tags.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(tags
        .into_iter()
        .zip(freq.ranked())
        .take(top_k)
        .enumerate()
        .map(|(i, ((tag, tag_count), (name, name_count)))| FrequencyGuess {
            rank: i + 1,
            tag: tag.clone(),
            name: name.as_str().to_string(),
            tag_count,
            name_count,
        })
        .collect())
}

pub fn write_frequency_csv(guesses: &[FrequencyGuess], mut out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["rank", "tag", "name", "tag_count", "name_count"])?;
    for g in guesses {
        w.write_record([
            g.rank.to_string(),
            g.tag.to_string(),
            g.name.clone(),
            g.tag_count.to_string(),
            g.name_count.to_string(),
        ])?;
    }
    w.flush()
}

/// Where [`chain_recovery`] looks for a neighbour's counterpart.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainScope {
    /// Fingerprint unique among the unrecovered neighbours on both sides.
    Neighborhood,
    /// Fingerprint unique across each whole table.
    Global,
    /// Neighbourhood test first, global test for what it leaves ambiguous.
    #[default]
    NeighborhoodThenGlobal,
}

struct ChainState<'a> {
    tagged: &'a SimilarityTable,
    rebuilt: &'a SimilarityTable,
    /// Tagged index to rebuilt index.
    forward: HashMap<u32, u32>,
    /// Rebuilt index to tagged index.
    backward: HashMap<u32, u32>,
    assignments: BTreeMap<String, Recovered>,
}

impl ChainState<'_> {
    fn assign(&mut self, t: u32, r: u32, iteration: u32) -> Result<()> {
        if let Some(&prev) = self.backward.get(&r) {
            if prev != t {
                return Err(Error::Contradiction(format!(
                    "{} would be assigned to both {} and {}",
                    self.rebuilt.id(r),
                    self.tagged.id(prev),
                    self.tagged.id(t)
                )));
            }
            return Ok(());
        }
        self.forward.insert(t, r);
        self.backward.insert(r, t);
        self.assignments.insert(
            self.tagged.id(t).to_string(),
            Recovered {
                name: self.rebuilt.id(r).to_string(),
                iteration,
            },
        );
        Ok(())
    }
}

fn unrecovered_neighbours(table: &SimilarityTable, idx: u32, recovered: &HashMap<u32, u32>) -> Vec<u32> {
    table
        .row_at(idx)
        .unwrap_or(&[])
        .iter()
        .map(|&(r, _)| r)
        .filter(|&r| r != idx && !recovered.contains_key(&r))
        .collect()
}

/// Expands seed assignments through neighbouring rows.
///
/// Each round looks at every recovered pair `(t, n)`. An unrecovered
/// neighbour of `t` is assigned when its fingerprint picks out exactly one
/// candidate under `scope`. Rounds repeat until one adds nothing.
pub fn chain_recovery(
    tagged: &SimilarityTable,
    rebuilt: &SimilarityTable,
    seeds: &BTreeMap<String, String>,
    scope: ChainScope,
) -> Result<RecoveryResult> {
    check_pair(tagged, rebuilt)?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("chain recovery needs at least one seed".into()));
    }
    let tagged_fps = fingerprints(tagged);
    let rebuilt_fps = fingerprints(rebuilt);
    let tagged_unique = unique_index(&tagged_fps);
    let rebuilt_unique = unique_index(&rebuilt_fps);

    let mut state = ChainState {
        tagged,
        rebuilt,
        forward: HashMap::new(),
        backward: HashMap::new(),
        assignments: BTreeMap::new(),
    };
    for (tag, name) in seeds {
        let t = tagged.index_of(tag).ok_or_else(|| Error::UnknownId(tag.clone()))?;
        let r = rebuilt.index_of(name).ok_or_else(|| Error::UnknownId(name.clone()))?;
        state.assign(t, r, 0)?;
    }

    let mut per_iteration = Vec::new();
    let mut iteration = 0u32;
    loop {
        iteration += 1;
        let before = state.forward.len();
        let mut recovered: Vec<(u32, u32)> = state.forward.iter().map(|(&t, &r)| (t, r)).collect();
        recovered.sort_unstable();
        for (t, r) in recovered {
            let t_open = unrecovered_neighbours(tagged, t, &state.forward);
            if t_open.is_empty() {
                continue;
            }
            let r_open = unrecovered_neighbours(rebuilt, r, &state.backward);
            let mut t_by_fp: HashMap<&Fingerprint, Vec<u32>> = HashMap::new();
            for &x in &t_open {
                if let Some(fp) = &tagged_fps[x as usize] {
                    t_by_fp.entry(fp).or_default().push(x);
                }
            }
            let mut r_by_fp: HashMap<&Fingerprint, Vec<u32>> = HashMap::new();
            for &y in &r_open {
                if let Some(fp) = &rebuilt_fps[y as usize] {
                    r_by_fp.entry(fp).or_default().push(y);
                }
            }
            for &x in &t_open {
                if state.forward.contains_key(&x) {
                    continue;
                }
                let Some(fp) = &tagged_fps[x as usize] else { continue };
                let local = match (t_by_fp[fp].as_slice(), r_by_fp.get(fp).map(Vec::as_slice)) {
                    ([_], Some([y])) => Some(*y),
                    _ => None,
                };
                let global = || match (tagged_unique.get(fp), rebuilt_unique.get(fp)) {
                    (Some(&tx), Some(&y)) if tx == x => Some(y),
                    _ => None,
                };
                let pick = match scope {
                    ChainScope::Neighborhood => local,
                    ChainScope::Global => global(),
                    ChainScope::NeighborhoodThenGlobal => local.or_else(global),
                };
                if let Some(y) = pick {
                    state.assign(x, y, iteration)?;
                }
            }
        }
        let added = state.forward.len() - before;
        if added == 0 {
            break;
        }
        per_iteration.push(added);
    }

    Ok(RecoveryResult {
        assignments: state.assignments,
        n_unique: tagged_unique.len(),
        n_rows: tagged.num_left(),
        iterations: iteration,
        per_iteration,
    })
}
