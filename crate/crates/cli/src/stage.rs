//! Stage bookkeeping: every stage owns `<outdir>/<stage>/` and a
//! `stage.json` naming its inputs, parameters, seed and outputs by digest.
//! A stage whose fingerprint and outputs are unchanged is skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use silico_core::corpus::TOOL_VERSION;
use silico_core::digest::{derive_seed, sha256_hex};
use silico_core::{Error, Result};

pub const STAGE_SCHEMA: &str = "stage/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub schema: String,
    pub stage: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub seed: u64,
    pub params: Value,
    /// Input name to content digest (see [`file_digest`]).
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the stage dir) to content digest.
    pub outputs: BTreeMap<String, String>,
    pub fingerprint: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

pub struct Stages {
    pub outdir: PathBuf,
    pub master_seed: u64,
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
}

/// Wall-clock fields that say when an artifact was made, not what it holds.
pub const VOLATILE_KEYS: [&str; 4] = ["fetched_at", "started_at", "finished_at", "approved_at"];

/// Replaces every volatile timestamp in `value` with null.
pub fn strip_volatile(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                if VOLATILE_KEYS.contains(&key.as_str()) {
                    *v = Value::Null;
                } else {
                    strip_volatile(v);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

fn canonical_json(text: &str) -> Option<String> {
    let mut value: Value = serde_json::from_str(text).ok()?;
    strip_volatile(&mut value);
    serde_json::to_string(&value).ok()
}

/// Content digest of a file. JSON and JSONL files are hashed with their
/// volatile timestamps nulled, so an identical re-crawl or re-approval does
/// not invalidate everything downstream.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let canonical = match (ext, std::str::from_utf8(&bytes)) {
        ("json", Ok(text)) => canonical_json(text),
        ("jsonl", Ok(text)) => text
            .lines()
            .map(|line| if line.trim().is_empty() { Some(String::new()) } else { canonical_json(line) })
            .collect::<Option<Vec<_>>>()
            .map(|lines| lines.join("\n")),
        _ => None,
    };
    Ok(match canonical {
        Some(text) => sha256_hex(text.as_bytes()),
        None => sha256_hex(&bytes),
    })
}

impl Stages {
    pub fn dir(&self, stage: &str) -> PathBuf {
        self.outdir.join(stage)
    }

    pub fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.dir(stage).join(file)
    }

    pub fn seed(&self, stage: &str) -> u64 {
        derive_seed(self.master_seed, stage)
    }

    /// Resolves the named input, failing with a pointer to the stage that
    /// should have produced it.
    pub fn require(&self, path: &Path, producer: &str) -> Result<PathBuf> {
        if path.exists() {
            Ok(path.to_path_buf())
        } else {
            log::error!("missing {}; run the `{producer}` stage first", path.display());
            Err(Error::MissingInput(path.to_path_buf()))
        }
    }

    fn fingerprint(&self, stage: &str, seed: u64, params: &Value, inputs: &BTreeMap<String, String>) -> String {
        let body = serde_json::json!({
            "stage": stage,
            "tool_version": TOOL_VERSION,
            "master_seed": self.master_seed,
            "seed": seed,
            "params": params,
            "inputs": inputs,
        });
        sha256_hex(body.to_string().as_bytes())
    }

    fn up_to_date(&self, record_path: &Path, fingerprint: &str) -> bool {
        let Ok(previous) = silico_core::io::read_json::<StageRecord>(record_path) else {
            return false;
        };
        previous.fingerprint == fingerprint
            && previous.outputs.iter().all(|(name, digest)| {
                file_digest(&record_path.with_file_name(name)).is_ok_and(|d| &d == digest)
            })
    }

    /// Runs `body` in the stage directory unless an identical run is already
    /// on disk. `body` returns the output file names it wrote.
    pub fn run<F>(&self, stage: &str, params: Value, inputs: &[(&str, PathBuf)], body: F) -> Result<Outcome>
    where
        F: FnOnce(&Path, u64) -> Result<Vec<String>>,
    {
        let seed = self.seed(stage);
        let mut digests = BTreeMap::new();
        for (name, path) in inputs {
            digests.insert((*name).to_string(), file_digest(path)?);
        }
        let fingerprint = self.fingerprint(stage, seed, &params, &digests);
        let dir = self.dir(stage);
        let record_path = dir.join("stage.json");
        if !self.force && self.up_to_date(&record_path, &fingerprint) {
            log::info!("{stage}: inputs and parameters unchanged, skipping (use --force to rerun)");
            return Ok(Outcome::UpToDate);
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let started_at = Utc::now();
        log::info!("{stage}: running");
        let written = body(&dir, seed)?;
        let mut outputs = BTreeMap::new();
        for name in written {
            let digest = file_digest(&dir.join(&name))?;
            outputs.insert(name, digest);
        }
        let record = StageRecord {
            schema: STAGE_SCHEMA.into(),
            stage: stage.into(),
            tool_version: TOOL_VERSION.into(),
            master_seed: self.master_seed,
            seed,
            params,
            inputs: digests,
            outputs,
            fingerprint,
            started_at,
            finished_at: Utc::now(),
        };
        silico_core::io::write_json(&record_path, &record)?;
        Ok(Outcome::Ran)
    }
}
