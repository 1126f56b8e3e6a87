//! Per-invocation output directory and its `meta.json` record.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct RunDir {
    pub path: PathBuf,
    inputs: BTreeMap<String, String>,
    extra: BTreeMap<String, serde_json::Value>,
}

impl RunDir {
    /// Creates `<out>/<command>-<label>`, or `<out>/<command>-<unix seconds>`
    /// with a numeric suffix if that already exists.
    pub fn create(out: &Path, command: &str, label: Option<&str>) -> Result<Self> {
        let path = match label {
            Some(l) => out.join(format!("{command}-{l}")),
            None => {
                let secs = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                let base = out.join(format!("{command}-{secs}"));
                let mut candidate = base.clone();
                let mut n = 1;
                while candidate.exists() {
                    candidate = PathBuf::from(format!("{}-{n}", base.display()));
                    n += 1;
                }
                candidate
            }
        };
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RunDir {
            path,
            inputs: BTreeMap::new(),
            extra: BTreeMap::new(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Records the SHA-256 of an input file.
    pub fn hash_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.extra.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.file(name);
        let text = serde_json::to_string_pretty(value)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn finish(self, command: &str, seed: Option<u64>, config: &impl Serialize) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Meta<'a, C> {
            tool: &'static str,
            version: &'static str,
            command: &'a str,
            seed: Option<u64>,
            config: &'a C,
            inputs: &'a BTreeMap<String, String>,
            #[serde(flatten)]
            extra: &'a BTreeMap<String, serde_json::Value>,
        }
        let meta = Meta {
            tool: "linkleak",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config,
            inputs: &self.inputs,
            extra: &self.extra,
        };
        self.write_json("meta.json", &meta)?;
        Ok(self.path)
    }
}
