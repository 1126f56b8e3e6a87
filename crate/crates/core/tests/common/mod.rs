//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use linkleak::corpus::NameList;
use linkleak::simtable::CostModel;

/// Shortest path over the edit lattice, relaxing every admissible step from
/// each state in topological order. Costs stay in floating point.
pub fn lattice_cost(left: &[char], right: &[char], m: &CostModel) -> f64 {
    let (rows, cols) = (left.len() + 1, right.len() + 1);
    let mut best = vec![f64::INFINITY; rows * cols];
    best[0] = 0.0;
    let w = |first: bool| if first { m.first_char_multiplier } else { 1.0 };
    for i in 0..rows {
        for j in 0..cols {
            let here = best[i * cols + j];
            if !here.is_finite() {
                continue;
            }
            // Steps out of (i, j): i counts produced `left` chars, j consumed `right` chars.
            if j < right.len() {
                let c = here + m.delete * w(i == 0);
                if c < best[i * cols + j + 1] {
                    best[i * cols + j + 1] = c;
                }
            }
            if i < left.len() {
                let c = here + m.insert * w(i == 0);
                if c < best[(i + 1) * cols + j] {
                    best[(i + 1) * cols + j] = c;
                }
            }
            if i < left.len() && j < right.len() {
                let step = if left[i] == right[j] { 0.0 } else { m.substitute * w(i == 0) };
                if here + step < best[(i + 1) * cols + j + 1] {
                    best[(i + 1) * cols + j + 1] = here + step;
                }
            }
            if i + 1 < left.len()
                && j + 1 < right.len()
                && left[i] == right[j + 1]
                && left[i + 1] == right[j]
                && left[i] != left[i + 1]
            {
                let c = here + m.transpose * w(i == 0);
                if c < best[(i + 2) * cols + j + 2] {
                    best[(i + 2) * cols + j + 2] = c;
                }
            }
        }
    }
    best[left.len() * cols + right.len()]
}

pub fn oracle_score(left: &str, right: &str, m: &CostModel) -> u32 {
    let l: Vec<char> = left.chars().collect();
    let r: Vec<char> = right.chars().collect();
    let cost = lattice_cost(&l, &r, m);
    (100.0 * cost / l.len() as f64 + 1e-9).floor() as u32
}

pub fn naive_records(names: &NameList, threshold: u32, m: &CostModel) -> BTreeSet<(String, String, u32)> {
    let chars: Vec<Vec<char>> = names.iter().map(|n| n.as_str().chars().collect()).collect();
    let mut out = BTreeSet::new();
    for (a, ca) in names.iter().zip(&chars) {
        for (b, cb) in names.iter().zip(&chars) {
            let s = (100.0 * lattice_cost(ca, cb, m) / ca.len() as f64 + 1e-9).floor() as u32;
            if s <= threshold {
                out.insert((a.to_string(), b.to_string(), s));
            }
        }
    }
    out
}
