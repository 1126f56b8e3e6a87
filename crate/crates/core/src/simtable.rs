//! Asymmetric spelling-distance scores and thresholded similarity tables.
//!
//! `score(left, right)` is the cheapest weighted edit script turning `right`
//! into `left`, as a floored percentage of `left`'s length. Operations that
//! touch the first character of `left` cost `first_char_multiplier` times more.
//!
//! The all-pairs join is blocked. Every edit operation moves the character
//! histogram by a bounded amount (substitution 2, insertion or deletion 1,
//! transposition 0), so the score threshold caps the histogram distance and
//! forces a minimum number of shared characters. Candidates come from a
//! length window plus a multiset deletion-neighbourhood index, with a
//! token-prefix index for names whose neighbourhood is too large.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Name, NameList};
use crate::error::{Error, Result};
use crate::pseudonym::{tag, MacKey};

/// Default threshold: entries scoring above 25 are discarded.
pub const DEFAULT_THRESHOLD: u32 = 25;

/// Costs are fixed-point with this many units per 1.0.
const COST_SCALE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub substitute: f64,
    pub insert: f64,
    pub delete: f64,
    pub transpose: f64,
    pub first_char_multiplier: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            substitute: 1.0,
            insert: 1.0,
            delete: 0.5,
            transpose: 0.5,
            first_char_multiplier: 2.0,
        }
    }
}

/// Integer costs in units of `COST_SCALE^-2`.
#[derive(Debug, Clone, Copy)]
struct OpCosts {
    sub: [u64; 2],
    ins: [u64; 2],
    del: [u64; 2],
    trans: [u64; 2],
}

impl CostModel {
    /// Costs must be non-negative with at most three decimals; the multiplier
    /// must be at least 1.
    pub fn validate(&self) -> Result<()> {
        self.op_costs().map(|_| ())
    }

    fn op_costs(&self) -> Result<OpCosts> {
        let fixed = |label: &str, v: f64| -> Result<u64> {
            let scaled = v * COST_SCALE as f64;
            if !v.is_finite() || v < 0.0 || (scaled - scaled.round()).abs() > 1e-6 {
                return Err(Error::InvalidCostModel(format!(
                    "{label} = {v} must be a non-negative multiple of 0.001"
                )));
            }
            Ok(scaled.round() as u64)
        };
        let mult = fixed("first_char_multiplier", self.first_char_multiplier)?;
        if mult < COST_SCALE {
            return Err(Error::InvalidCostModel(format!(
                "first_char_multiplier = {} must be >= 1",
                self.first_char_multiplier
            )));
        }
        let pair = |label: &str, v: f64| -> Result<[u64; 2]> {
            let c = fixed(label, v)?;
            Ok([c * COST_SCALE, c * mult])
        };
        Ok(OpCosts {
            sub: pair("substitute", self.substitute)?,
            ins: pair("insert", self.insert)?,
            del: pair("delete", self.delete)?,
            trans: pair("transpose", self.transpose)?,
        })
    }
}

/// Floored percentage score between character slices. Both must be non-empty.
fn score_chars(left: &[char], right: &[char], costs: &OpCosts) -> u32 {
    let raw = edit_cost(left, right, costs);
    let denom = COST_SCALE * COST_SCALE * left.len() as u64;
    ((100 * raw) / denom) as u32
}

/// Minimal weighted cost turning `right` into `left` (optimal string alignment).
fn edit_cost(left: &[char], right: &[char], c: &OpCosts) -> u64 {
    let (m, n) = (left.len(), right.len());
    let width = n + 1;
    let mut dp = vec![0u64; (m + 1) * width];
    // Row 0: dropping leading characters of `right` before the first target
    // character counts as a first-character operation.
    for j in 1..=n {
        dp[j] = dp[j - 1] + c.del[1];
    }
    for i in 1..=m {
        let first = usize::from(i == 1);
        let row = i * width;
        let prev = row - width;
        dp[row] = dp[prev] + c.ins[first];
        for j in 1..=n {
            let diag = if left[i - 1] == right[j - 1] {
                dp[prev + j - 1]
            } else {
                dp[prev + j - 1] + c.sub[first]
            };
            let mut best = diag.min(dp[prev + j] + c.ins[first]).min(dp[row + j - 1] + c.del[0]);
            if i >= 2
                && j >= 2
                && left[i - 1] == right[j - 2]
                && left[i - 2] == right[j - 1]
                && left[i - 1] != left[i - 2]
            {
                let t = dp[prev - width + j - 2] + c.trans[usize::from(i == 2)];
                best = best.min(t);
            }
            dp[row + j] = best;
        }
    }
    dp[m * width + n]
}

/// Score of `right` against `left`, normalized by `left`'s length.
pub fn score(left: &Name, right: &Name, model: &CostModel) -> Result<u32> {
    let costs = model.op_costs()?;
    let l: Vec<char> = left.as_str().chars().collect();
    let r: Vec<char> = right.as_str().chars().collect();
    Ok(score_chars(&l, &r, &costs))
}

/// A scorer with the cost model already validated, for hot loops.
#[derive(Debug, Clone, Copy)]
pub struct Scorer {
    costs: OpCosts,
}

impl Scorer {
    pub fn new(model: &CostModel) -> Result<Self> {
        Ok(Scorer {
            costs: model.op_costs()?,
        })
    }

    pub fn score_str(&self, left: &str, right: &str) -> Result<u32> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::EmptyName);
        }
        let l: Vec<char> = left.chars().collect();
        let r: Vec<char> = right.chars().collect();
        Ok(score_chars(&l, &r, &self.costs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdKind {
    Plaintext,
    Tagged,
}

impl IdKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IdKind::Plaintext => "plaintext",
            IdKind::Tagged => "tagged",
        }
    }
}

/// Directed sub-threshold records, grouped by left id.
///
/// Ids are interned in sorted order; `rows[i]` is `None` when id `i` only
/// ever appears in the right column. Every present row holds its self-record
/// and is sorted by right id.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTable {
    threshold: u32,
    id_kind: IdKind,
    ids: Vec<String>,
    index: HashMap<String, u32>,
    rows: Vec<Option<Vec<(u32, u32)>>>,
}

impl SimilarityTable {
    /// Validates and groups raw records. A missing self-record for a left id is
    /// added; a self-record with a non-zero score, a duplicate pair or a score
    /// above the threshold is rejected.
    pub fn from_records<I, S>(threshold: u32, id_kind: IdKind, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, u32)>,
        S: Into<String>,
    {
        let records: Vec<(String, String, u32)> = records
            .into_iter()
            .map(|(l, r, s)| (l.into(), r.into(), s))
            .collect();
        let ids: Vec<String> = records
            .iter()
            .flat_map(|(l, r, _)| [l.clone(), r.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<String, u32> =
            ids.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        let mut rows: Vec<Option<Vec<(u32, u32)>>> = vec![None; ids.len()];
        for (l, r, s) in &records {
            if *s > threshold {
                return Err(Error::InvalidTable(format!(
                    "score {s} for ({l}, {r}) exceeds threshold {threshold}"
                )));
            }
            if l == r && *s != 0 {
                return Err(Error::InvalidTable(format!("self-record for {l} has score {s}")));
            }
            rows[index[l] as usize]
                .get_or_insert_with(Vec::new)
                .push((index[r], *s));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            let Some(row) = row else { continue };
            if !row.iter().any(|&(r, _)| r as usize == i) {
                row.push((i as u32, 0));
            }
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidTable(format!(
                    "duplicate record ({}, {})",
                    ids[i], ids[w[0].0 as usize]
                )));
            }
        }
        Ok(SimilarityTable {
            threshold,
            id_kind,
            ids,
            index,
            rows,
        })
    }

    fn from_parts(threshold: u32, id_kind: IdKind, ids: Vec<String>, rows: Vec<Option<Vec<(u32, u32)>>>) -> Self {
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        SimilarityTable {
            threshold,
            id_kind,
            ids,
            index,
            rows,
        }
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn id_kind(&self) -> IdKind {
        self.id_kind
    }

    /// All ids from either column, sorted.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: u32) -> &str {
        &self.ids[index as usize]
    }

    /// The row of `id` including its self-record, or `None` if `id` is not a
    /// left id.
    pub fn row(&self, id: &str) -> Option<&[(u32, u32)]> {
        self.row_at(self.index_of(id)?)
    }

    pub fn row_at(&self, index: u32) -> Option<&[(u32, u32)]> {
        self.rows.get(index as usize)?.as_deref()
    }

    pub fn is_left(&self, index: u32) -> bool {
        self.row_at(index).is_some()
    }

    pub fn left_ids(&self) -> impl Iterator<Item = &str> {
        self.ids
            .iter()
            .zip(&self.rows)
            .filter(|(_, r)| r.is_some())
            .map(|(id, _)| id.as_str())
    }

    pub fn num_left(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    /// Number of records, self-records included.
    pub fn len(&self) -> usize {
        self.rows.iter().flatten().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Records in `(left, right)` order.
    pub fn records(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.rows.iter().enumerate().flat_map(move |(l, row)| {
            row.iter().flatten().map(move |&(r, s)| (self.ids[l].as_str(), self.ids[r as usize].as_str(), s))
        })
    }

    /// Renames every id. `rename` must be injective.
    pub fn relabel(&self, id_kind: IdKind, mut rename: impl FnMut(&str) -> String) -> Result<Self> {
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
        let ids: Vec<String> = order.iter().map(|&o| renamed[o as usize].clone()).collect();
        let rows = order
            .iter()
            .map(|&old| {
                self.rows[old as usize].as_ref().map(|row| {
                    let mut row: Vec<(u32, u32)> =
                        row.iter().map(|&(r, s)| (new_of_old[r as usize], s)).collect();
                    row.sort_unstable();
                    row
                })
            })
            .collect();
        Ok(Self::from_parts(self.threshold, id_kind, ids, rows))
    }

    /// Writes `left,right,score` sorted by `(left, right)`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["left", "right", "score"])?;
        for (l, r, s) in self.records() {
            w.write_record([l, r, &s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a table CSV. The threshold comes from `threshold`, else the sidecar
    /// metadata, else the largest score present. Without a sidecar the id kind
    /// is `tagged` when every id looks like a 64-char hex tag.
    pub fn read_csv(path: impl AsRef<Path>, threshold: Option<u32>) -> Result<Self> {
        let path = path.as_ref();
        let meta = TableMeta::read_sidecar(path)?;
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
        let header = reader.headers()?.clone();
        if header.iter().map(str::trim).collect::<Vec<_>>() != ["left", "right", "score"] {
            return Err(Error::parse(path, 1, "expected header left,right,score"));
        }
        let mut records = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::parse(path, line, format!("expected 3 fields, got {}", rec.len())));
            }
            let (l, r) = (rec[0].trim(), rec[1].trim());
            if l.is_empty() || r.is_empty() {
                return Err(Error::parse(path, line, "empty id"));
            }
            let s: u32 = rec[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("score {:?} is not a non-negative integer", &rec[2])))?;
            records.push((l.to_string(), r.to_string(), s));
        }
        let threshold = threshold
            .or(meta.as_ref().map(|m| m.threshold))
            .unwrap_or_else(|| records.iter().map(|r| r.2).max().unwrap_or(0));
        let id_kind = match &meta {
            Some(m) => m.id_kind,
            None if !records.is_empty()
                && records
                    .iter()
                    .all(|(l, r, _)| looks_like_tag(l) && looks_like_tag(r)) =>
            {
                IdKind::Tagged
            }
            None => IdKind::Plaintext,
        };
        Self::from_records(threshold, id_kind, records)
    }
}

fn looks_like_tag(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Sidecar metadata written next to a table CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub threshold: u32,
    pub cost_model: CostModel,
    pub id_kind: IdKind,
    pub corpus_size: usize,
}

impl TableMeta {
    /// `table.csv` → `table.meta.json`.
    pub fn sidecar_path(table_path: &Path) -> PathBuf {
        table_path.with_extension("meta.json")
    }

    pub fn write_sidecar(&self, table_path: &Path) -> Result<()> {
        let path = Self::sidecar_path(table_path);
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read_sidecar(table_path: &Path) -> Result<Option<Self>> {
        let path = Self::sidecar_path(table_path);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }
}

fn common_tokens(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Pruning bounds for left names of one length.
#[derive(Debug, Clone, Copy)]
struct Bounds {
    /// A pair survives iff `100 * cost < limit`.
    limit: u64,
    /// Largest admissible character-histogram distance, `None` if unbounded.
    max_hist: Option<usize>,
    min_len: usize,
    max_len: usize,
}

impl Bounds {
    fn new(left_len: usize, threshold: u32, c: &OpCosts) -> Self {
        let limit = (threshold as u64 + 1) * COST_SCALE * COST_SCALE * left_len as u64;
        // 2 * cost >= hist_distance * min(sub, 2 ins, 2 del)
        let unit = c.sub[0].min(2 * c.ins[0]).min(2 * c.del[0]);
        let max_hist = (unit > 0).then(|| {
            // largest d with 100 * d * unit < 2 * limit
            let d = (2 * limit).div_ceil(100 * unit);
            d.saturating_sub(1) as usize
        });
        // Length differences need that many insertions or deletions.
        let max_steps = |cost: u64| -> usize {
            if cost == 0 {
                usize::MAX
            } else {
                (limit.div_ceil(100 * cost)).saturating_sub(1) as usize
            }
        };
        let shorter = max_steps(c.ins[0]);
        let longer = max_steps(c.del[0]);
        Bounds {
            limit,
            max_hist,
            min_len: left_len.saturating_sub(shorter).max(1),
            max_len: left_len.saturating_add(longer),
        }
    }

    fn admits(&self, right_len: usize) -> bool {
        (self.min_len..=self.max_len).contains(&right_len)
    }

    /// Lower bound on shared tokens for a right name of `right_len` chars.
    fn min_overlap(&self, left_len: usize, right_len: usize) -> Option<i64> {
        let d = self.max_hist? as i64;
        Some((left_len as i64 + right_len as i64 - d + 1).div_euclid(2))
    }
}

/// Upper bound on neighbourhood keys per name before it falls back to the
/// token-prefix index.
const MAX_NEIGHBOURHOOD_KEYS: usize = 1024;

/// Sorted `(char, count)` histogram.
fn histogram(chars: &[char]) -> Vec<(char, u32)> {
    let mut sorted = chars.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(char, u32)> = Vec::new();
    for c in sorted {
        match out.last_mut() {
            Some((last, n)) if *last == c => *n += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

fn fnv_mix(mut h: u64, v: u64) -> u64 {
    for b in v.to_le_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash keys of every sub-multiset left after removing at most `max_removed`
/// characters, or `None` if there would be more than `cap` of them.
fn neighbourhood_keys(hist: &[(char, u32)], max_removed: usize, cap: usize) -> Option<Vec<u64>> {
    fn walk(
        hist: &[(char, u32)],
        pos: usize,
        budget: usize,
        h: u64,
        out: &mut Vec<u64>,
        cap: usize,
    ) -> bool {
        if pos == hist.len() {
            out.push(h);
            return out.len() <= cap;
        }
        let (c, n) = hist[pos];
        for removed in 0..=(n as usize).min(budget) {
            let kept = n as usize - removed;
            let next = if kept == 0 {
                h
            } else {
                fnv_mix(fnv_mix(h, u64::from(c)), kept as u64)
            };
            if !walk(hist, pos + 1, budget - removed, next, out, cap) {
                return false;
            }
        }
        true
    }
    let mut out = Vec::new();
    if !walk(hist, 0, max_removed, 0xcbf2_9ce4_8422_2325, &mut out, cap) {
        return None;
    }
    out.sort_unstable();
    out.dedup();
    Some(out)
}

/// Candidate generation for the blocked join.
///
/// The character histograms of a surviving pair share at least `t` characters
/// (see `Bounds`). Most names are indexed under every sub-multiset obtained by
/// deleting at most `len - t` characters; two names then meet under their
/// exact common sub-multiset. Names whose neighbourhood is too large are
/// indexed instead by a token prefix (tokens are `(char, occurrence)` pairs,
/// rarest first): a pair sharing `t` tokens shares one inside the first
/// `len - t + 1` tokens of each side, and each side may use its own lower
/// bound on `t`.
struct JoinIndex {
    chars: Vec<Vec<char>>,
    /// Token ids sorted ascending, for intersection counting.
    tokens: Vec<Vec<u32>>,
    /// Token ids ordered rarest first.
    ordered: Vec<Vec<u32>>,
    hists: Vec<Vec<(char, u32)>>,
    /// Indexed by left length.
    bounds: Vec<Bounds>,
    /// `(key, name)` sorted, for names indexed by neighbourhood.
    keyed: Vec<(u64, u32)>,
    /// Names indexed by neighbourhood, grouped by length.
    keyed_by_len: Vec<Vec<u32>>,
    /// Token -> overflow names holding it inside their index prefix.
    postings: Vec<Vec<u32>>,
    /// Names that may match with no shared character at all.
    wildcards: Vec<u32>,
    by_len: Vec<Vec<u32>>,
}

impl JoinIndex {
    fn new(names: &[Name], threshold: u32, costs: &OpCosts) -> Self {
        let chars: Vec<Vec<char>> = names.iter().map(|n| n.as_str().chars().collect()).collect();
        let mut token_ids: HashMap<(char, u32), u32> = HashMap::new();
        let mut tokens: Vec<Vec<u32>> = Vec::with_capacity(names.len());
        for cs in &chars {
            let mut seen: HashMap<char, u32> = HashMap::new();
            let mut toks: Vec<u32> = cs
                .iter()
                .map(|&c| {
                    let k = seen.entry(c).or_insert(0);
                    let key = (c, *k);
                    *k += 1;
                    let next = token_ids.len() as u32;
                    *token_ids.entry(key).or_insert(next)
                })
                .collect();
            toks.sort_unstable();
            tokens.push(toks);
        }
        let mut df = vec![0u32; token_ids.len()];
        for toks in &tokens {
            for &t in toks {
                df[t as usize] += 1;
            }
        }
        let ordered: Vec<Vec<u32>> = tokens
            .iter()
            .map(|toks| {
                let mut p = toks.clone();
                p.sort_unstable_by_key(|&t| (df[t as usize], t));
                p
            })
            .collect();
        let hists: Vec<Vec<(char, u32)>> = chars.iter().map(|c| histogram(c)).collect();

        let max_len = chars.iter().map(Vec::len).max().unwrap_or(0);
        let bounds: Vec<Bounds> = (0..=max_len).map(|l| Bounds::new(l, threshold, costs)).collect();
        // Smallest overlap bound on each right length from any admissible left length.
        let index_tau: Vec<Option<i64>> = (0..=max_len)
            .map(|r| {
                (1..=max_len)
                    .filter(|&l| bounds[l].admits(r))
                    .map(|l| bounds[l].min_overlap(l, r).unwrap_or(i64::MIN))
                    .min()
            })
            .collect();

        let per_name: Vec<Option<Vec<u64>>> = (0..chars.len())
            .into_par_iter()
            .map(|i| match index_tau[chars[i].len()] {
                Some(tau) if tau >= 1 => {
                    let removable = chars[i].len() - tau as usize;
                    neighbourhood_keys(&hists[i], removable, MAX_NEIGHBOURHOOD_KEYS)
                }
                _ => None,
            })
            .collect();

        let mut keyed = Vec::new();
        let mut keyed_by_len = vec![Vec::new(); max_len + 1];
        let mut postings: Vec<Vec<u32>> = vec![Vec::new(); token_ids.len()];
        let mut wildcards = Vec::new();
        let mut by_len = vec![Vec::new(); max_len + 1];
        for (i, keys) in per_name.into_iter().enumerate() {
            let len = chars[i].len();
            by_len[len].push(i as u32);
            if let Some(keys) = keys {
                keyed.extend(keys.into_iter().map(|k| (k, i as u32)));
                keyed_by_len[len].push(i as u32);
                continue;
            }
            match index_tau[len] {
                None => {}
                Some(tau) if tau <= 0 => wildcards.push(i as u32),
                Some(tau) => {
                    let prefix = len - tau as usize + 1;
                    for &t in &ordered[i][..prefix] {
                        postings[t as usize].push(i as u32);
                    }
                }
            }
        }
        keyed.par_sort_unstable();
        JoinIndex {
            chars,
            tokens,
            ordered,
            hists,
            bounds,
            keyed,
            keyed_by_len,
            postings,
            wildcards,
            by_len,
        }
    }

    /// Every right id scoring within the threshold against left id `a`,
    /// self excluded.
    fn row_for(&self, a: usize, costs: &OpCosts, stamp: &mut [u32], generation: &mut u32) -> Vec<(u32, u32)> {
        let left = &self.chars[a];
        let bounds = self.bounds[left.len()];
        let max_len = bounds.max_len.min(self.by_len.len() - 1);
        let mut out = Vec::new();

        *generation = generation.wrapping_add(1);
        if *generation == 0 {
            stamp.iter_mut().for_each(|s| *s = 0);
            *generation = 1;
        }
        let gen = *generation;
        let mut consider = |b: u32, out: &mut Vec<(u32, u32)>| {
            let b = b as usize;
            if b == a || stamp[b] == gen {
                return;
            }
            stamp[b] = gen;
            let right = &self.chars[b];
            if !bounds.admits(right.len()) {
                return;
            }
            if let Some(max_hist) = bounds.max_hist {
                let hist = left.len() + right.len() - 2 * common_tokens(&self.tokens[a], &self.tokens[b]);
                if hist > max_hist {
                    return;
                }
            }
            let cost = edit_cost(left, right, costs);
            if 100 * cost < bounds.limit {
                out.push((b as u32, score_chars(left, right, costs)));
            }
        };

        let probe_tau = (bounds.min_len..=max_len)
            .filter_map(|r| bounds.min_overlap(left.len(), r))
            .min();
        let Some(tau) = probe_tau.filter(|&t| t >= 1) else {
            for len in bounds.min_len..=max_len {
                for &b in &self.by_len[len] {
                    consider(b, &mut out);
                }
            }
            return out;
        };

        // Names indexed by neighbourhood.
        let removable = left.len() - tau as usize;
        match neighbourhood_keys(&self.hists[a], removable, MAX_NEIGHBOURHOOD_KEYS) {
            Some(keys) => {
                for k in keys {
                    let from = self.keyed.partition_point(|&(key, _)| key < k);
                    for &(key, b) in &self.keyed[from..] {
                        if key != k {
                            break;
                        }
                        consider(b, &mut out);
                    }
                }
            }
            None => {
                for len in bounds.min_len..=max_len {
                    for &b in &self.keyed_by_len[len] {
                        consider(b, &mut out);
                    }
                }
            }
        }

        // Overflow names, by token prefix.
        let prefix = left.len() - tau as usize + 1;
        for &t in &self.ordered[a][..prefix] {
            for &b in &self.postings[t as usize] {
                consider(b, &mut out);
            }
        }
        for &b in &self.wildcards {
            consider(b, &mut out);
        }
        out
    }
}

/// Builds the thresholded table for `names`, tagging ids when a key is given.
///
/// The result is exactly `{(a, b, score(a, b)) : score(a, b) <= threshold}` plus
/// one self-record per name; blocking only skips pairs that provably exceed
/// the threshold.
pub fn build_table(
    names: &NameList,
    threshold: u32,
    model: &CostModel,
    tagging: Option<&MacKey>,
) -> Result<SimilarityTable> {
    if names.is_empty() {
        return Err(Error::InvalidArgument("cannot build a table from an empty name list".into()));
    }
    let costs = model.op_costs()?;
    let index = JoinIndex::new(names.as_slice(), threshold, &costs);
    let n = names.len();
    let rows: Vec<Option<Vec<(u32, u32)>>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0u32; n], 0u32),
            |(stamp, generation), a| {
                let mut row = index.row_for(a, &costs, stamp, generation);
                row.push((a as u32, 0));
                row.sort_unstable();
                Some(row)
            },
        )
        .collect();
    let ids: Vec<String> = names.iter().map(|n| n.as_str().to_string()).collect();
    let table = SimilarityTable::from_parts(threshold, IdKind::Plaintext, ids, rows);
    match tagging {
        None => Ok(table),
        Some(key) => table.relabel(IdKind::Tagged, |id| {
            tag(&Name::new(id).expect("table ids are normalized names"), key).to_string()
        }),
    }
}

/// Ids that appear only in the right column.
pub fn right_only_tags(table: &SimilarityTable) -> BTreeSet<String> {
    let mut seen_right = vec![false; table.ids.len()];
    for row in table.rows.iter().flatten() {
        for &(r, _) in row {
            seen_right[r as usize] = true;
        }
    }
    (0..table.ids.len())
        .filter(|&i| seen_right[i] && table.rows[i].is_none())
        .map(|i| table.ids[i].clone())
        .collect()
}
