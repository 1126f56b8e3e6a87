use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use linkleak::attack_fingerprint::ChainScope;
use linkleak::attack_graphmatch::Strategy;
use linkleak::simtable::{CostModel, DEFAULT_THRESHOLD};

#[derive(Parser, Debug)]
#[command(name = "linkleak", version, about = "Attacks on pseudonymized name-similarity tables")]
pub struct Cli {
    /// Parent directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,

    /// Run directory suffix; defaults to a Unix timestamp.
    #[arg(long, global = true)]
    pub label: Option<String>,

    /// Seed for every random choice (sampling, demo keys).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Score every name pair and write the thresholded similarity table.
    BuildTable(BuildTableArgs),
    /// Tag a name list with HMAC-SHA-256 (or plain SHA-256).
    Tag(TagArgs),
    /// Connected-component statistics of a table's similarity graph.
    Stats(StatsArgs),
    /// Run one of the attacks.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Multi-step experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand, Debug)]
pub enum AttackCommand {
    /// Match row fingerprints of a tagged table against a rebuilt plaintext one.
    Fingerprint(FingerprintArgs),
    /// Align tag frequencies with public name frequencies.
    Frequency(FrequencyArgs),
    /// Grow known tag/name pairs through neighbouring rows.
    Chain(ChainArgs),
    /// Match sampled plaintext subgraphs into the tagged full graph.
    GraphMatch(GraphMatchArgs),
    /// Recover tags by tagging a dictionary, optionally over a small key space.
    Dictionary(DictionaryArgs),
}

#[derive(Subcommand, Debug)]
pub enum ExperimentCommand {
    /// Connectivity and graph-matching sweep over sample fractions.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CostArgs {
    /// Substitution cost [default: 1.0]
    #[arg(long)]
    pub sub_cost: Option<f64>,
    /// Insertion cost [default: 1.0]
    #[arg(long)]
    pub ins_cost: Option<f64>,
    /// Deletion cost [default: 0.5]
    #[arg(long)]
    pub del_cost: Option<f64>,
    /// Adjacent transposition cost [default: 0.5]
    #[arg(long)]
    pub transpose_cost: Option<f64>,
    /// Factor on operations touching the first character [default: 2.0]
    #[arg(long)]
    pub first_char_multiplier: Option<f64>,
}

impl CostArgs {
    pub fn model(&self) -> CostModel {
        let d = CostModel::default();
        CostModel {
            substitute: self.sub_cost.unwrap_or(d.substitute),
            insert: self.ins_cost.unwrap_or(d.insert),
            delete: self.del_cost.unwrap_or(d.delete),
            transpose: self.transpose_cost.unwrap_or(d.transpose),
            first_char_multiplier: self.first_char_multiplier.unwrap_or(d.first_char_multiplier),
        }
    }
}

/// Where the HMAC key comes from. The hex value itself is never serialized.
#[derive(Args, Debug, Clone, Serialize)]
pub struct KeyArgs {
    /// Key as hex. Visible in the process list; prefer --hmac-key-file.
    #[arg(long, conflicts_with_all = ["hmac_key_file", "generate_key_bits"])]
    #[serde(skip)]
    pub hmac_key_hex: Option<String>,

    /// File holding the key as hex.
    #[arg(long, conflicts_with = "generate_key_bits")]
    pub hmac_key_file: Option<PathBuf>,

    /// Generate a key with this many bits of entropy (seeded with --seed).
    #[arg(long, requires = "key_out")]
    pub generate_key_bits: Option<u32>,

    /// Where a generated key is written, as hex.
    #[arg(long)]
    pub key_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct BuildTableArgs {
    /// Name list, one per line.
    #[arg(long)]
    pub names: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: u32,
    #[command(flatten)]
    pub costs: CostArgs,
    #[command(flatten)]
    pub key: KeyArgs,
    /// Fail on names that collide after normalization instead of merging them.
    #[arg(long)]
    pub strict: bool,
    /// Also write the name,tag ground truth here (tagged tables only).
    #[arg(long)]
    pub tagmap_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct TagArgs {
    #[arg(long)]
    pub names: PathBuf,
    #[command(flatten)]
    pub key: KeyArgs,
    /// Unkeyed SHA-256 instead of HMAC.
    #[arg(long, conflicts_with_all = ["hmac_key_hex", "hmac_key_file", "generate_key_bits"])]
    pub plain_hash: bool,
    #[arg(long)]
    pub strict: bool,
    /// Also write the name,tag ground truth here.
    #[arg(long)]
    pub tagmap_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Overrides the threshold from the table's sidecar.
    #[arg(long)]
    pub threshold: Option<u32>,
    /// Sample fractions for a sweep, e.g. 0.1,0.2,0.3.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct FingerprintArgs {
    #[arg(long)]
    pub tagged: PathBuf,
    #[arg(long)]
    pub rebuilt: PathBuf,
    #[arg(long)]
    pub threshold: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
pub struct FrequencyArgs {
    /// Tag column, one tag per line, repeats included.
    #[arg(long)]
    pub tags: PathBuf,
    /// name,count CSV of public name frequencies.
    #[arg(long)]
    pub frequencies: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    Neighborhood,
    Global,
    NeighborhoodThenGlobal,
}

impl From<ScopeArg> for ChainScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Neighborhood => ChainScope::Neighborhood,
            ScopeArg::Global => ChainScope::Global,
            ScopeArg::NeighborhoodThenGlobal => ChainScope::NeighborhoodThenGlobal,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ChainArgs {
    #[arg(long)]
    pub tagged: PathBuf,
    #[arg(long)]
    pub rebuilt: PathBuf,
    /// Known pair as TAG=NAME; repeatable.
    #[arg(long = "pair", required = true, value_parser = parse_pair)]
    pub pairs: Vec<(String, String)>,
    #[arg(long, value_enum, default_value = "neighborhood-then-global")]
    pub scope: ScopeArg,
    #[arg(long)]
    pub threshold: Option<u32>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (t, n) = s.split_once('=').ok_or_else(|| format!("expected TAG=NAME, got {s:?}"))?;
    let name = linkleak::corpus::normalize(n);
    if t.trim().is_empty() || name.is_empty() {
        return Err(format!("expected TAG=NAME, got {s:?}"));
    }
    Ok((t.trim().to_ascii_lowercase(), name))
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Equality,
    Containment,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Equality => Strategy::Equality,
            StrategyArg::Containment => Strategy::Containment,
        }
    }
}

pub const DEFAULT_FRACTIONS: &str = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";

#[derive(Args, Debug, Serialize)]
pub struct GraphMatchArgs {
    /// Plaintext similarity table; the full graph is tagged internally.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub threshold: Option<u32>,
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_FRACTIONS)]
    pub fractions: Vec<f64>,
    #[arg(long, value_enum, default_value = "containment")]
    pub strategy: StrategyArg,
}

#[derive(Args, Debug, Serialize)]
pub struct DictionaryArgs {
    /// Target tags, one per line.
    #[arg(long)]
    pub tags: PathBuf,
    /// Candidate names, one per line.
    #[arg(long)]
    pub dictionary: PathBuf,
    /// Search every demo key with this many bits; without it, tags are
    /// assumed to be unkeyed SHA-256.
    #[arg(long)]
    pub key_bits: Option<u32>,
    /// Write a recovered key here, as hex.
    #[arg(long, requires = "key_bits")]
    pub key_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["names", "table"])))]
pub struct SweepArgs {
    /// Build the table from this name list first.
    #[arg(long)]
    pub names: Option<PathBuf>,
    /// Use an existing plaintext table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Defaults to 25 for --names and to the sidecar value for --table.
    #[arg(long)]
    pub threshold: Option<u32>,
    #[command(flatten)]
    pub costs: CostArgs,
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_FRACTIONS)]
    pub fractions: Vec<f64>,
    #[arg(long, value_enum, default_value = "containment")]
    pub strategy: StrategyArg,
}
