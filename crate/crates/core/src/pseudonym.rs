//! Keyed name tags (HMAC-SHA-256) and the dictionary attack against them.
//!
//! Low-entropy "demo" keys live in an enumerable space of exactly
//! `2^entropy_bits` keys, which is what lets the dictionary attack walk the
//! whole key space.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use hmac::{Hmac, KeyInit, Mac};
use rand::rngs::OsRng;
use rand::TryRngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Name, NameList};
use crate::error::{Error, Result};

type HmacSha256 = Hmac<Sha256>;

const DEMO_KEY_DOMAIN: &[u8] = b"linkleak/demo-key/v1";

/// Largest key space `enumerate_key_space` will walk.
pub const MAX_ENUMERABLE_BITS: u32 = 32;

#[derive(Clone, PartialEq, Eq)]
pub struct MacKey {
    bytes: Vec<u8>,
    entropy_bits: u32,
}

impl MacKey {
    /// Wraps caller-supplied key material. Its entropy is unknown, so it is
    /// declared as `8 * len` capped at 256.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::InvalidKey("empty key".into()));
        }
        let entropy_bits = (bytes.len() as u32 * 8).min(256);
        Ok(MacKey {
            bytes,
            entropy_bits,
        })
    }

    pub fn from_hex(hex_key: &str) -> Result<Self> {
        let bytes = hex::decode(hex_key.trim()).map_err(|e| Error::InvalidKey(e.to_string()))?;
        Self::from_bytes(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn entropy_bits(&self) -> u32 {
        self.entropy_bits
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }
}

// Never print key material.
impl fmt::Debug for MacKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MacKey")
            .field("len", &self.bytes.len())
            .field("entropy_bits", &self.entropy_bits)
            .finish_non_exhaustive()
    }
}

/// Demo key number `index` out of a `2^entropy_bits` key space.
fn derive_demo_key(entropy_bits: u32, index: &[u8; 32]) -> MacKey {
    let mut h = Sha256::new();
    h.update(DEMO_KEY_DOMAIN);
    h.update((entropy_bits as u16).to_be_bytes());
    h.update(index);
    MacKey {
        bytes: h.finalize().to_vec(),
        entropy_bits,
    }
}

/// Keeps only the low `bits` bits of a big-endian 256-bit integer.
fn mask_to_bits(mut value: [u8; 32], bits: u32) -> [u8; 32] {
    let full_bytes = (bits / 8) as usize;
    let rem = bits % 8;
    for (i, b) in value.iter_mut().rev().enumerate() {
        if i < full_bytes {
            continue;
        }
        if i == full_bytes && rem > 0 {
            *b &= (1u8 << rem) - 1;
        } else {
            *b = 0;
        }
    }
    value
}

fn index_from_u64(i: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    out[24..].copy_from_slice(&i.to_be_bytes());
    out
}

/// Generates a MAC key.
///
/// Without a seed the key index is drawn from the OS generator; a 256-bit
/// request returns 32 raw random octets. With a seed (demo mode) the index is
/// `SHA-256(seed)` truncated to `entropy_bits`, so the key is reproducible and
/// is one of exactly `2^entropy_bits` candidates.
pub fn generate_key(entropy_bits: u32, seed: Option<u64>) -> Result<MacKey> {
    if entropy_bits > 256 {
        return Err(Error::EntropyOutOfRange(entropy_bits));
    }
    let raw: [u8; 32] = match seed {
        Some(seed) => Sha256::digest(seed.to_be_bytes()).into(),
        None => {
            let mut buf = [0u8; 32];
            OsRng
                .try_fill_bytes(&mut buf)
                .map_err(|e| Error::InvalidKey(format!("os rng failure: {e}")))?;
            if entropy_bits == 256 {
                return Ok(MacKey {
                    bytes: buf.to_vec(),
                    entropy_bits,
                });
            }
            buf
        }
    };
    Ok(derive_demo_key(entropy_bits, &mask_to_bits(raw, entropy_bits)))
}

/// Every key `generate_key(entropy_bits, Some(_))` can produce, in index order.
pub fn enumerate_key_space(entropy_bits: u32) -> Result<impl Iterator<Item = MacKey>> {
    if entropy_bits > MAX_ENUMERABLE_BITS {
        return Err(Error::KeySpaceTooLarge(entropy_bits));
    }
    Ok((0..(1u64 << entropy_bits)).map(move |i| derive_demo_key(entropy_bits, &index_from_u64(i))))
}

/// Lowercase hex MAC (or hash) output.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag(String);

impl Tag {
    pub fn parse(hex_tag: &str) -> Result<Self> {
        let t = hex_tag.trim().to_ascii_lowercase();
        if t.len() != 64 || !t.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::InvalidArgument(format!("not a 64-char hex tag: {hex_tag:?}")));
        }
        Ok(Tag(t))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// HMAC-SHA-256 over the UTF-8 bytes of the name.
pub fn tag(name: &Name, key: &MacKey) -> Tag {
    Tag(hex::encode(hmac_sha256(key.as_bytes(), name.as_str().as_bytes())))
}

/// Raw HMAC-SHA-256.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> Vec<u8> {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(message);
    mac.finalize().into_bytes().to_vec()
}

/// Unkeyed SHA-256 of the name, the plain-hash pseudonymization.
pub fn hash_tag(name: &Name) -> Tag {
    Tag(hex::encode(Sha256::digest(name.as_str().as_bytes())))
}

/// Name/tag ground truth. Only evaluation code should look at `reverse`.
#[derive(Debug, Clone, Default)]
pub struct TagMap {
    forward: BTreeMap<Name, Tag>,
    reverse: HashMap<Tag, Name>,
}

impl TagMap {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn tag_of(&self, name: &Name) -> Option<&Tag> {
        self.forward.get(name)
    }

    pub fn name_of(&self, tag: &Tag) -> Option<&Name> {
        self.reverse.get(tag)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Tag)> {
        self.forward.iter()
    }

    fn insert(&mut self, name: Name, tag: Tag) -> Result<()> {
        if let Some(prev) = self.reverse.get(&tag) {
            if *prev != name {
                return Err(Error::TagCollision {
                    first: prev.to_string(),
                    second: name.to_string(),
                    tag: tag.0,
                });
            }
            return Ok(());
        }
        self.reverse.insert(tag.clone(), name.clone());
        self.forward.insert(name, tag);
        Ok(())
    }

    /// Writes `name,tag` rows sorted by name.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["name", "tag"])?;
        for (name, tag) in &self.forward {
            w.write_record([name.as_str(), tag.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let mut map = TagMap::default();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != 2 {
                return Err(Error::parse(path, line, "expected name,tag"));
            }
            let name = Name::new(&rec[0]).map_err(|_| Error::parse(path, line, "empty name"))?;
            let tag = Tag::parse(&rec[1]).map_err(|e| Error::parse(path, line, e.to_string()))?;
            map.insert(name, tag)?;
        }
        Ok(map)
    }
}

pub fn tag_corpus(list: &NameList, key: &MacKey) -> Result<TagMap> {
    if list.is_empty() {
        return Err(Error::InvalidArgument("cannot tag an empty name list".into()));
    }
    let tags: Vec<Tag> = list.as_slice().par_iter().map(|n| tag(n, key)).collect();
    let mut map = TagMap::default();
    for (name, t) in list.iter().zip(tags) {
        map.insert(name.clone(), t)?;
    }
    Ok(map)
}

/// Reads one hex tag per line, skipping blank lines.
pub fn read_tag_set(path: impl AsRef<Path>) -> Result<HashSet<Tag>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.insert(Tag::parse(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct DictionaryRecovery {
    pub recovered: BTreeMap<Tag, Name>,
    pub keys_tried: u64,
    /// The key under which tags were recovered, when a key space was searched.
    pub key: Option<MacKey>,
}

/// Tags every dictionary word under each candidate key (or unkeyed SHA-256 when
/// `key_space` is `None`) and collects the matches. Stops as soon as every
/// target tag is recovered.
pub fn dictionary_attack<I>(
    tags: &HashSet<Tag>,
    dictionary: &NameList,
    key_space: Option<I>,
) -> DictionaryRecovery
where
    I: IntoIterator<Item = MacKey>,
{
    let mut out = DictionaryRecovery::default();
    if tags.is_empty() || dictionary.is_empty() {
        return out;
    }
    let matches_under = |tagger: &(dyn Fn(&Name) -> Tag + Sync)| -> Vec<(Tag, Name)> {
        dictionary
            .as_slice()
            .par_iter()
            .filter_map(|n| {
                let t = tagger(n);
                tags.contains(&t).then(|| (t, n.clone()))
            })
            .collect()
    };
    match key_space {
        None => {
            out.keys_tried = 0;
            out.recovered.extend(matches_under(&hash_tag));
        }
        Some(keys) => {
            for key in keys {
                out.keys_tried += 1;
                let found = matches_under(&|n: &Name| tag(n, &key));
                if found.is_empty() {
                    continue;
                }
                if out.key.is_none() {
                    out.key = Some(key.clone());
                }
                for (t, n) in found {
                    out.recovered.entry(t).or_insert(n);
                }
                if out.recovered.len() == tags.len() {
                    break;
                }
            }
        }
    }
    out
}
