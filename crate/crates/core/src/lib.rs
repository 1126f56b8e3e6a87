//! Attacks on pseudonymized record-linkage name tables.
//!
//! A name list is tagged with a keyed MAC, fuzzy-matching scores between the
//! names are published next to the tags, and every module here shows a way to
//! get the names back.

pub mod attack_fingerprint;
pub mod attack_graphmatch;
pub mod corpus;
pub mod error;
pub mod pseudonym;
pub mod simgraph;
pub mod simtable;
pub mod synth;

pub use error::{Error, Result};
