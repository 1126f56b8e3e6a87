use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde::Serialize;

use linkleak::attack_fingerprint::{
    chain_recovery, count_tags, frequency_attack, match_fingerprints, uniqueness_rate, write_frequency_csv,
    RecoveryResult,
};
use linkleak::attack_graphmatch::{run_experiment, write_report_csv, Strategy};
use linkleak::corpus::{load_frequencies, load_names, LoadReport, NameList};
use linkleak::pseudonym::{
    dictionary_attack, enumerate_key_space, generate_key, hash_tag, read_tag_set, tag_corpus, MacKey, Tag,
};
use linkleak::simgraph::{build_graph, components, connectivity_sweep, write_sweep_csv_file};
use linkleak::simtable::{build_table, CostModel, SimilarityTable, TableMeta, DEFAULT_THRESHOLD};

use crate::cli::*;
use crate::run::RunDir;
use crate::UsageError;

/// Options shared by every command.
pub struct Global<'a> {
    pub out: &'a Path,
    pub label: Option<&'a str>,
    pub seed: Option<u64>,
}

impl Global<'_> {
    fn run_dir(&self, command: &str) -> Result<RunDir> {
        RunDir::create(self.out, command, self.label)
    }

    /// Seed for sampling; 0 when none was given so runs stay reproducible.
    fn sampling_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("input file not found: {}", path.display())).into());
    }
    Ok(())
}

fn load_list(path: &Path, strict: bool) -> Result<(NameList, LoadReport)> {
    require_file(path)?;
    let (names, report) = load_names(path, !strict)?;
    info!(
        "{}: {} names from {} lines ({} empty, {} duplicates)",
        path.display(),
        names.len(),
        report.lines,
        report.empty,
        report.duplicates
    );
    Ok((names, report))
}

fn read_table(path: &Path, threshold: Option<u32>) -> Result<SimilarityTable> {
    require_file(path)?;
    let table = SimilarityTable::read_csv(path, threshold)?;
    info!(
        "{}: {} records, {} ids, threshold {}, {} ids",
        path.display(),
        table.len(),
        table.ids().len(),
        table.threshold(),
        table.id_kind().as_str()
    );
    Ok(table)
}

#[derive(Serialize)]
struct LoadNote {
    lines: usize,
    empty: usize,
    duplicates: usize,
}

impl From<&LoadReport> for LoadNote {
    fn from(r: &LoadReport) -> Self {
        LoadNote {
            lines: r.lines,
            empty: r.empty,
            duplicates: r.duplicates,
        }
    }
}

fn write_secret(path: &Path, hex_key: &str) -> Result<()> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path).with_context(|| format!("opening key file {}", path.display()))?;
    writeln!(f, "{hex_key}").with_context(|| format!("writing key file {}", path.display()))
}

/// Returns the key and a description of its origin that is safe to record.
fn resolve_key(args: &KeyArgs, seed: Option<u64>) -> Result<Option<(MacKey, String)>> {
    if let Some(h) = &args.hmac_key_hex {
        return Ok(Some((MacKey::from_hex(h)?, "hex flag".into())));
    }
    if let Some(p) = &args.hmac_key_file {
        require_file(p)?;
        let text = fs::read_to_string(p).with_context(|| format!("reading key file {}", p.display()))?;
        return Ok(Some((MacKey::from_hex(text.trim())?, format!("file {}", p.display()))));
    }
    if let Some(bits) = args.generate_key_bits {
        let key_out = args
            .key_out
            .as_ref()
            .ok_or_else(|| UsageError("--generate-key-bits needs --key-out".into()))?;
        let key = generate_key(bits, seed)?;
        write_secret(key_out, &key.to_hex())?;
        let how = if seed.is_some() { "seeded" } else { "random" };
        return Ok(Some((key, format!("generated {bits}-bit {how}, written to {}", key_out.display()))));
    }
    if args.key_out.is_some() {
        return Err(UsageError("--key-out needs --generate-key-bits".into()).into());
    }
    Ok(None)
}

pub fn build_table_cmd(g: &Global, a: &BuildTableArgs) -> Result<PathBuf> {
    let (names, report) = load_list(&a.names, a.strict)?;
    let model = a.costs.model();
    model.validate()?;
    let key = resolve_key(&a.key, g.seed)?;
    if a.tagmap_out.is_some() && key.is_none() {
        return Err(UsageError("--tagmap-out needs a key".into()).into());
    }
    let table = build_table(&names, a.threshold, &model, key.as_ref().map(|(k, _)| k))?;
    info!("{} records", table.len());

    let mut run = g.run_dir("build-table")?;
    run.hash_input(&a.names)?;
    let table_path = run.file("table.csv");
    table.write_csv(&table_path)?;
    TableMeta {
        threshold: a.threshold,
        cost_model: model,
        id_kind: table.id_kind(),
        corpus_size: names.len(),
    }
    .write_sidecar(&table_path)?;
    if let (Some(path), Some((k, _))) = (&a.tagmap_out, &key) {
        tag_corpus(&names, k)?.write_csv(path)?;
    }
    run.note("load_report", LoadNote::from(&report))?;
    run.note("records", table.len())?;
    run.note("key_source", key.as_ref().map(|(_, s)| s))?;
    run.finish("build-table", g.seed, a)
}

pub fn tag_cmd(g: &Global, a: &TagArgs) -> Result<PathBuf> {
    let (names, report) = load_list(&a.names, a.strict)?;
    let key = resolve_key(&a.key, g.seed)?;
    let pairs: Vec<(String, Tag)> = match (&key, a.plain_hash) {
        (Some((k, _)), _) => tag_corpus(&names, k)?
            .iter()
            .map(|(n, t)| (n.as_str().to_string(), t.clone()))
            .collect(),
        (None, true) => names.iter().map(|n| (n.as_str().to_string(), hash_tag(n))).collect(),
        (None, false) => {
            return Err(UsageError("tag needs a key option or --plain-hash".into()).into());
        }
    };
    let mut run = g.run_dir("tag")?;
    run.hash_input(&a.names)?;
    let mut tags: Vec<&str> = pairs.iter().map(|(_, t)| t.as_str()).collect();
    tags.sort_unstable();
    let tags_path = run.file("tags.txt");
    fs::write(&tags_path, tags.join("\n") + "\n").with_context(|| format!("writing {}", tags_path.display()))?;
    if let Some(path) = &a.tagmap_out {
        let mut w = csv_writer(path)?;
        w.write_record(["name", "tag"])?;
        for (n, t) in &pairs {
            w.write_record([n.as_str(), t.as_str()])?;
        }
        w.flush()?;
    }
    run.note("load_report", LoadNote::from(&report))?;
    run.note("key_source", key.as_ref().map(|(_, s)| s.as_str()).or(a.plain_hash.then_some("none (sha-256)")))?;
    run.finish("tag", g.seed, a)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn stats_cmd(g: &Global, a: &StatsArgs) -> Result<PathBuf> {
    let table = read_table(&a.table, a.threshold)?;
    let graph = build_graph(&table);
    let mut run = g.run_dir("stats")?;
    run.hash_input(&a.table)?;
    run.write_json("stats.json", &components(&graph).summary())?;
    if !a.fractions.is_empty() {
        let rows = connectivity_sweep(&graph, &a.fractions, g.sampling_seed())?;
        write_sweep_csv_file(&rows, run.file("sweep.csv"))?;
    }
    run.note("sampling_seed", g.sampling_seed())?;
    run.finish("stats", g.seed, a)
}

fn write_recovery(run: &RunDir, result: &RecoveryResult, extra: impl Serialize) -> Result<()> {
    result.write_csv_file(run.file("recovered.csv"))?;
    #[derive(Serialize)]
    struct Summary<S, E> {
        #[serde(flatten)]
        summary: S,
        #[serde(flatten)]
        extra: E,
    }
    run.write_json(
        "summary.json",
        &Summary {
            summary: result.summary(),
            extra,
        },
    )
}

pub fn fingerprint_cmd(g: &Global, a: &FingerprintArgs) -> Result<PathBuf> {
    let tagged = read_table(&a.tagged, a.threshold)?;
    let rebuilt = read_table(&a.rebuilt, a.threshold)?;
    let result = match_fingerprints(&tagged, &rebuilt)?;
    let uniq = uniqueness_rate(&tagged);
    info!("{} of {} rows recovered", result.n_recovered(), result.n_rows);
    let mut run = g.run_dir("attack-fingerprint")?;
    run.hash_input(&a.tagged)?;
    run.hash_input(&a.rebuilt)?;
    #[derive(Serialize)]
    struct Extra {
        n_ids: usize,
        uniqueness_rate_all_ids: f64,
    }
    write_recovery(
        &run,
        &result,
        Extra {
            n_ids: uniq.n_ids,
            uniqueness_rate_all_ids: uniq.rate_over_all_ids(),
        },
    )?;
    run.finish("attack-fingerprint", g.seed, a)
}

pub fn frequency_cmd(g: &Global, a: &FrequencyArgs) -> Result<PathBuf> {
    require_file(&a.tags)?;
    let text = fs::read_to_string(&a.tags).with_context(|| format!("reading {}", a.tags.display()))?;
    let mut tags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        tags.push(Tag::parse(line).with_context(|| format!("{}:{}", a.tags.display(), i + 1))?);
    }
    require_file(&a.frequencies)?;
    let freq = load_frequencies(&a.frequencies)?;
    let guesses = frequency_attack(&count_tags(&tags), &freq, a.top_k)?;
    let mut run = g.run_dir("attack-frequency")?;
    run.hash_input(&a.tags)?;
    run.hash_input(&a.frequencies)?;
    let path = run.file("ranking.csv");
    let mut buf = Vec::new();
    write_frequency_csv(&guesses, &mut buf)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    run.note("n_tags", tags.len())?;
    run.finish("attack-frequency", g.seed, a)
}

pub fn chain_cmd(g: &Global, a: &ChainArgs) -> Result<PathBuf> {
    let tagged = read_table(&a.tagged, a.threshold)?;
    let rebuilt = read_table(&a.rebuilt, a.threshold)?;
    let mut seeds = BTreeMap::new();
    for (t, n) in &a.pairs {
        if seeds.insert(t.clone(), n.clone()).is_some_and(|prev| prev != *n) {
            return Err(UsageError(format!("tag {t} given more than one name")).into());
        }
    }
    let result = chain_recovery(&tagged, &rebuilt, &seeds, a.scope.into())?;
    info!(
        "{} recovered over {} rounds ({:?} per round)",
        result.n_recovered(),
        result.iterations,
        result.per_iteration
    );
    let mut run = g.run_dir("attack-chain")?;
    run.hash_input(&a.tagged)?;
    run.hash_input(&a.rebuilt)?;
    write_recovery(&run, &result, ())?;
    run.finish("attack-chain", g.seed, a)
}

fn write_reports(run: &RunDir, table: &SimilarityTable, fractions: &[f64], seed: u64, strategy: Strategy) -> Result<()> {
    let reports = run_experiment(table, fractions, seed, strategy).context("graph-matching experiment failed")?;
    let path = run.file("graphmatch.csv");
    let mut buf = Vec::new();
    write_report_csv(&reports, &mut buf)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn graph_match_cmd(g: &Global, a: &GraphMatchArgs) -> Result<PathBuf> {
    let table = read_table(&a.table, a.threshold)?;
    let mut run = g.run_dir("attack-graph-match")?;
    run.hash_input(&a.table)?;
    write_reports(&run, &table, &a.fractions, g.sampling_seed(), a.strategy.into())?;
    run.note("sampling_seed", g.sampling_seed())?;
    run.finish("attack-graph-match", g.seed, a)
}

pub fn dictionary_cmd(g: &Global, a: &DictionaryArgs) -> Result<PathBuf> {
    require_file(&a.tags)?;
    let tags = read_tag_set(&a.tags)?;
    let (dict, _) = load_list(&a.dictionary, false)?;
    let recovery = match a.key_bits {
        None => dictionary_attack(&tags, &dict, None::<Vec<MacKey>>),
        Some(bits) => dictionary_attack(&tags, &dict, Some(enumerate_key_space(bits)?)),
    };
    info!(
        "{} of {} tags recovered after {} keys",
        recovery.recovered.len(),
        tags.len(),
        recovery.keys_tried
    );
    let mut run = g.run_dir("attack-dictionary")?;
    run.hash_input(&a.tags)?;
    run.hash_input(&a.dictionary)?;
    let mut w = csv_writer(&run.file("recovered.csv"))?;
    w.write_record(["tag", "name"])?;
    for (t, n) in &recovery.recovered {
        w.write_record([t.as_str(), n.as_str()])?;
    }
    w.flush()?;
    if let (Some(path), Some(key)) = (&a.key_out, &recovery.key) {
        write_secret(path, &key.to_hex())?;
    }
    #[derive(Serialize)]
    struct Summary {
        n_tags: usize,
        n_recovered: usize,
        recovery_rate: f64,
        keys_tried: u64,
        key_found: bool,
    }
    let n_tags = tags.len();
    run.write_json(
        "summary.json",
        &Summary {
            n_tags,
            n_recovered: recovery.recovered.len(),
            recovery_rate: if n_tags == 0 { 0.0 } else { recovery.recovered.len() as f64 / n_tags as f64 },
            keys_tried: recovery.keys_tried,
            key_found: recovery.key.is_some(),
        },
    )?;
    run.finish("attack-dictionary", g.seed, a)
}

pub fn sweep_cmd(g: &Global, a: &SweepArgs) -> Result<PathBuf> {
    let mut run;
    let table = match (&a.names, &a.table) {
        (Some(names_path), None) => {
            let (names, _) = load_list(names_path, false)?;
            let model: CostModel = a.costs.model();
            model.validate()?;
            let threshold = a.threshold.unwrap_or(DEFAULT_THRESHOLD);
            let table = build_table(&names, threshold, &model, None)?;
            run = g.run_dir("experiment-sweep")?;
            run.hash_input(names_path)?;
            let table_path = run.file("table.csv");
            table.write_csv(&table_path)?;
            TableMeta {
                threshold,
                cost_model: model,
                id_kind: table.id_kind(),
                corpus_size: names.len(),
            }
            .write_sidecar(&table_path)?;
            table
        }
        (None, Some(table_path)) => {
            let table = read_table(table_path, a.threshold)?;
            run = g.run_dir("experiment-sweep")?;
            run.hash_input(table_path)?;
            table
        }
        _ => return Err(UsageError("give exactly one of --names or --table".into()).into()),
    };
    let graph = build_graph(&table);
    run.write_json("stats.json", &components(&graph).summary())?;
    let rows = connectivity_sweep(&graph, &a.fractions, g.sampling_seed())?;
    write_sweep_csv_file(&rows, run.file("connectivity.csv"))?;
    write_reports(&run, &table, &a.fractions, g.sampling_seed(), a.strategy.into())?;
    run.note("sampling_seed", g.sampling_seed())?;
    run.finish("experiment-sweep", g.seed, a)
}
