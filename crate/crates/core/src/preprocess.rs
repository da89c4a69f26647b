//! Refinement of a raw snapshot: sparsity pruning, then removal of
//! over-frequent (boilerplate) descriptions.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{CorpusSnapshot, SubmoltRecord};
use crate::error::{Error, Result};

pub const NORMALIZATION_VERSION: &str = "nfc-ws/1";
pub const DEFAULT_TEMPLATE_THRESHOLD: usize = 3;

/// Canonical key for frequency counting: NFC, whitespace runs collapsed to a
/// single space, trimmed. Case is preserved.
pub fn normalize_description(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops records whose description is empty or whitespace-only.
pub fn prune_sparse(records: Vec<SubmoltRecord>) -> (Vec<SubmoltRecord>, usize) {
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| !normalize_description(&r.description).is_empty())
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Removes every record whose normalized description occurs more than
/// `threshold` times. All copies go, not just the surplus.
pub fn eliminate_templates(
    records: Vec<SubmoltRecord>,
    threshold: usize,
) -> Result<(Vec<SubmoltRecord>, usize)> {
    if threshold < 1 {
        return Err(Error::Config("template threshold must be at least 1".into()));
    }
    let keys: Vec<String> = records
        .iter()
        .map(|r| normalize_description(&r.description))
        .collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for key in &keys {
        *counts.entry(key.as_str()).or_default() += 1;
    }
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .zip(&keys)
        .filter(|(_, key)| counts[key.as_str()] <= threshold)
        .map(|(r, _)| r)
        .collect();
    let removed = before - kept.len();
    Ok((kept, removed))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedCorpus {
    pub source_snapshot_id: String,
    pub records: Vec<SubmoltRecord>,
    pub pruned_sparse: usize,
    pub pruned_template: usize,
    pub frequency_threshold: usize,
    pub normalization_version: String,
}

/// The refinement audit record written alongside a refined corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementAudit {
    pub input: usize,
    pub pruned_sparse: usize,
    pub pruned_template: usize,
    pub output: usize,
    pub threshold: usize,
    pub normalization_version: String,
}

impl RefinedCorpus {
    pub fn audit(&self) -> RefinementAudit {
        RefinementAudit {
            input: self.records.len() + self.pruned_sparse + self.pruned_template,
            pruned_sparse: self.pruned_sparse,
            pruned_template: self.pruned_template,
            output: self.records.len(),
            threshold: self.frequency_threshold,
            normalization_version: self.normalization_version.clone(),
        }
    }

    pub fn descriptions(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.description.as_str())
    }

    /// Header line with provenance, then one record per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = RefinedHeader {
            schema: REFINED_SCHEMA.into(),
            source_snapshot_id: self.source_snapshot_id.clone(),
            pruned_sparse: self.pruned_sparse,
            pruned_template: self.pruned_template,
            frequency_threshold: self.frequency_threshold,
            normalization_version: self.normalization_version.clone(),
            record_count: self.records.len(),
        };
        let mut out = serde_json::to_vec(&header).map_err(|e| Error::json("refined header", e))?;
        out.push(b'\n');
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::json("refined record", e))?;
            out.push(b'\n');
        }
        crate::io::write_bytes(path, &out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let context = path.display().to_string();
        let mut lines = text.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("{context}: empty refined corpus file")))?;
        let raw: serde_json::Value = serde_json::from_str(first).map_err(|e| Error::json(&context, e))?;
        let schema = raw.get("schema").and_then(serde_json::Value::as_str).unwrap_or("");
        if schema != REFINED_SCHEMA {
            return Err(Error::SchemaVersion { expected: REFINED_SCHEMA.into(), found: schema.into() });
        }
        let header: RefinedHeader = serde_json::from_value(raw).map_err(|e| Error::json(&context, e))?;
        let records = lines
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json(&context, e)))
            .collect::<Result<Vec<SubmoltRecord>>>()?;
        if records.len() != header.record_count {
            return Err(Error::InvalidInput(format!(
                "{context}: header announces {} records, file holds {}",
                header.record_count,
                records.len()
            )));
        }
        Ok(Self {
            source_snapshot_id: header.source_snapshot_id,
            records,
            pruned_sparse: header.pruned_sparse,
            pruned_template: header.pruned_template,
            frequency_threshold: header.frequency_threshold,
            normalization_version: header.normalization_version,
        })
    }
}

pub const REFINED_SCHEMA: &str = "refined/1";

#[derive(Serialize, Deserialize)]
struct RefinedHeader {
    schema: String,
    source_snapshot_id: String,
    pruned_sparse: usize,
    pruned_template: usize,
    frequency_threshold: usize,
    normalization_version: String,
    record_count: usize,
}

pub fn refine(snapshot: &CorpusSnapshot, threshold: usize) -> Result<RefinedCorpus> {
    let (kept, pruned_sparse) = prune_sparse(snapshot.records.clone());
    let (records, pruned_template) = eliminate_templates(kept, threshold)?;
    Ok(RefinedCorpus {
        source_snapshot_id: snapshot.snapshot_id.clone(),
        records,
        pruned_sparse,
        pruned_template,
        frequency_threshold: threshold,
        normalization_version: NORMALIZATION_VERSION.into(),
    })
}
