//! Seeded synthetic surname corpora.
//!
//! Names are built from syllables, and a share of them are spelling variants
//! of earlier names. This gives the clustered near-neighbour structure of real
//! surname lists (SMITH, SMYTH, SMITHSON, ...) without shipping any real data.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Name, NameList};

const ONSETS: &[&str] = &[
    "", "B", "BR", "C", "CH", "CL", "D", "DR", "F", "G", "GR", "H", "J", "K", "L", "M", "MC",
    "N", "P", "PR", "R", "S", "SH", "ST", "T", "TH", "TR", "V", "W", "WH", "Y", "Z",
];
const VOWELS: &[&str] = &["A", "E", "I", "O", "U", "A", "E", "I", "O", "Y", "EA", "OO", "IE"];
const CODAS: &[&str] = &[
    "", "", "N", "R", "L", "S", "T", "CK", "LL", "NN", "RD", "RN", "TT", "M", "ND", "NG", "X", "TH",
];
const SUFFIXES: &[&str] = &[
    "SON", "S", "ER", "MAN", "TON", "LEY", "FORD", "WELL", "E", "Y", "ING", "ELL", "ETT", "ES",
];
const LETTERS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";

/// Share of names derived from an earlier name rather than built fresh.
const VARIANT_RATE: f64 = 0.5;

fn fresh(rng: &mut ChaCha8Rng) -> String {
    let syllables = match rng.random_range(0..20) {
        0..=6 => 1,
        7..=18 => 2,
        _ => 3,
    };
    let mut out = String::new();
    for _ in 0..syllables {
        out.push_str(ONSETS.choose(rng).unwrap());
        out.push_str(VOWELS.choose(rng).unwrap());
        out.push_str(CODAS.choose(rng).unwrap());
    }
    if rng.random_bool(0.15) {
        out.push_str(SUFFIXES.choose(rng).unwrap());
    }
    out
}

fn random_letter<R: Rng + ?Sized>(rng: &mut R) -> char {
    LETTERS[rng.random_range(0..LETTERS.len())] as char
}

/// One random spelling change: substitution, insertion, deletion, adjacent
/// transposition, or an added suffix.
pub fn mutate(base: &str, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = base.chars().collect();
    match rng.random_range(0..5) {
        0 if !chars.is_empty() => {
            let i = rng.random_range(0..chars.len());
            chars[i] = random_letter(rng);
        }
        1 => {
            let i = rng.random_range(0..=chars.len());
            chars.insert(i, random_letter(rng));
        }
        2 if chars.len() > 2 => {
            let i = rng.random_range(0..chars.len());
            chars.remove(i);
        }
        3 if chars.len() > 2 => {
            let i = rng.random_range(0..chars.len() - 1);
            chars.swap(i, i + 1);
        }
        _ => {
            return format!("{base}{}", SUFFIXES.choose(rng).unwrap());
        }
    }
    chars.into_iter().collect()
}

/// `n` distinct surnames, deterministic in `seed`.
pub fn synthetic_surnames(n: usize, seed: u64) -> NameList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut order: Vec<String> = Vec::with_capacity(n);
    while order.len() < n {
        let candidate = if !order.is_empty() && rng.random_bool(VARIANT_RATE) {
            let base = order[rng.random_range(0..order.len())].clone();
            mutate(&base, &mut rng)
        } else {
            fresh(&mut rng)
        };
        if candidate.is_empty() || !seen.insert(candidate.clone()) {
            continue;
        }
        order.push(candidate);
    }
    NameList::from_names(order.iter().map(|s| Name::new(s).expect("generated names are non-empty")))
}
