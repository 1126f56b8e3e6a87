//! Name corpora: normalization, loading, frequency tables and seeded sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A normalized plaintext name: uppercase, trimmed, internal whitespace runs
/// collapsed to a single space. Non-letters are kept so that scanning errors
/// such as `SM8TH` stay representable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Name(String);

impl Name {
    pub fn new(raw: &str) -> Result<Self> {
        let normalized = normalize(raw);
        if normalized.is_empty() {
            return Err(Error::EmptyName);
        }
        Ok(Name(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Length in characters, the unit used by score normalization.
    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Name {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Name {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Name::new(&value)
    }
}

impl From<Name> for String {
    fn from(name: Name) -> String {
        name.0
    }
}

pub fn normalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_uppercase));
    }
    out
}

/// Sorted, duplicate-free list of names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameList {
    names: Vec<Name>,
}

impl NameList {
    /// Builds a list from arbitrary names, dropping duplicates.
    pub fn from_names(names: impl IntoIterator<Item = Name>) -> Self {
        let set: BTreeSet<Name> = names.into_iter().collect();
        NameList {
            names: set.into_iter().collect(),
        }
    }

    /// Normalizes and deduplicates raw strings, skipping empties.
    pub fn from_raw<'a>(raw: impl IntoIterator<Item = &'a str>) -> Self {
        Self::from_names(raw.into_iter().filter_map(|r| Name::new(r).ok()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Name> {
        self.names.iter()
    }

    pub fn as_slice(&self) -> &[Name] {
        &self.names
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.names.binary_search(name).is_ok()
    }
}

impl<'a> IntoIterator for &'a NameList {
    type Item = &'a Name;
    type IntoIter = std::slice::Iter<'a, Name>;

    fn into_iter(self) -> Self::IntoIter {
        self.names.iter()
    }
}

/// What `load_names` discarded while reading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub lines: usize,
    pub empty: usize,
    pub duplicates: usize,
}

impl LoadReport {
    pub fn dropped(&self) -> usize {
        self.empty + self.duplicates
    }
}

/// Reads one name per line. With `dedupe` unset, a duplicate after
/// normalization is an error instead of being dropped.
pub fn load_names(path: impl AsRef<Path>, dedupe: bool) -> Result<(NameList, LoadReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut report = LoadReport::default();
    let mut seen = BTreeSet::new();
    for line in text.lines() {
        report.lines += 1;
        let Ok(name) = Name::new(line) else {
            report.empty += 1;
            continue;
        };
        if seen.contains(&name) {
            if !dedupe {
                return Err(Error::DuplicateName(name.0));
            }
            report.duplicates += 1;
            continue;
        }
        seen.insert(name);
    }
    if seen.is_empty() {
        return Err(Error::NoNames(path.to_path_buf()));
    }
    Ok((
        NameList {
            names: seen.into_iter().collect(),
        },
        report,
    ))
}

/// Public name-frequency data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    entries: BTreeMap<Name, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` occurrences of `name`, summing on repeat.
    pub fn add(&mut self, name: Name, count: u64) {
        *self.entries.entry(name).or_insert(0) += count;
    }

    pub fn get(&self, name: &Name) -> Option<u64> {
        self.entries.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, u64)> {
        self.entries.iter().map(|(n, c)| (n, *c))
    }

    /// Entries by descending count, ties by ascending name.
    pub fn ranked(&self) -> Vec<(&Name, u64)> {
        let mut out: Vec<_> = self.iter().collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }
}

impl FromIterator<(Name, u64)> for FrequencyTable {
    fn from_iter<I: IntoIterator<Item = (Name, u64)>>(iter: I) -> Self {
        let mut table = FrequencyTable::new();
        for (name, count) in iter {
            table.add(name, count);
        }
        table
    }
}

/// Reads a `name,count` CSV. A first row whose count column is not numeric is
/// taken to be a header.
pub fn load_frequencies(path: impl AsRef<Path>) -> Result<FrequencyTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut table = FrequencyTable::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record?;
        if record.len() != 2 {
            return Err(Error::parse(path, line, format!("expected 2 fields, got {}", record.len())));
        }
        let count: i64 = match record[1].parse() {
            Ok(c) => c,
            Err(_) if line == 1 => continue,
            Err(_) => {
                return Err(Error::parse(path, line, format!("count {:?} is not an integer", &record[1])))
            }
        };
        if count < 0 {
            return Err(Error::parse(path, line, format!("negative count {count}")));
        }
        let name = Name::new(&record[0]).map_err(|_| Error::parse(path, line, "empty name"))?;
        table.add(name, count as u64);
    }
    Ok(table)
}

/// `round(fraction * n)` with halves rounded up.
pub fn sample_size(n: usize, fraction: f64) -> Result<usize> {
    check_fraction(fraction)?;
    Ok(((fraction * n as f64) + 0.5).floor() as usize)
}

pub(crate) fn check_fraction(fraction: f64) -> Result<()> {
    if fraction.is_nan() || fraction <= 0.0 || fraction > 1.0 {
        return Err(Error::FractionOutOfRange(fraction));
    }
    Ok(())
}

/// Ascending indices of a uniform sample without replacement.
///
/// The sample is the prefix of a seeded ChaCha8 permutation of `0..n`, so for a
/// fixed seed a larger fraction always yields a superset of a smaller one.
pub fn sample_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    let k = sample_size(n, fraction)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    perm.truncate(k);
    perm.sort_unstable();
    Ok(perm)
}

pub fn sample_names(list: &NameList, fraction: f64, seed: u64) -> Result<NameList> {
    let picked = sample_indices(list.len(), fraction, seed)?;
    Ok(NameList {
        names: picked.into_iter().map(|i| list.names[i].clone()).collect(),
    })
}
