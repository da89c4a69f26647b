//! Sub-community records and replayable corpus snapshots.

mod client;
mod pacer;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::sha256_parts;
use crate::error::{Error, Result};

pub use client::{
    crawl_all, crawl_to_file, fetch_page, pagination_registry, ClientConfig, CrawlFailure,
    CursorPagination, Page, PageCursor, PageNumberPagination, PaginationScheme, ReadOnlyClient,
    RetryPolicy, API_KEY_ENV, BASE_URL_ENV,
};
pub use pacer::TokenBucket;

pub const SNAPSHOT_SCHEMA: &str = "snapshot/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One agent-created sub-community as served by the discovery endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmoltRecord {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub creator: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl SubmoltRecord {
    pub fn new(id: impl Into<String>, name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            display_name: None,
            description: description.into(),
            created_at: None,
            creator: None,
            extra: BTreeMap::new(),
        }
    }

    /// Decodes one wire object. Returns `None` for records without a usable
    /// `id` or `name`; everything else is tolerated.
    pub fn from_wire(value: &Value) -> Option<Self> {
        let obj = value.as_object()?;
        let id = match obj.get("id")? {
            Value::String(s) if !s.is_empty() => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return None,
        };
        let name = obj.get("name")?.as_str()?.to_string();
        let mut record = SubmoltRecord::new(id, name, String::new());
        for (key, v) in obj {
            match (key.as_str(), v) {
                ("id" | "name", _) => {}
                ("description", Value::String(s)) => record.description = s.clone(),
                ("description", Value::Null) => {}
                ("display_name", Value::String(s)) => record.display_name = Some(s.clone()),
                ("display_name", Value::Null) | ("creator", Value::Null) => {}
                ("creator", Value::String(s)) => record.creator = Some(s.clone()),
                ("created_at", Value::String(s)) => match DateTime::parse_from_rfc3339(s) {
                    Ok(t) => record.created_at = Some(t.with_timezone(&Utc)),
                    Err(_) => {
                        record.extra.insert(key.clone(), s.clone());
                    }
                },
                ("created_at", Value::Null) => {}
                (_, Value::String(s)) => {
                    record.extra.insert(key.clone(), s.clone());
                }
                (_, other) => {
                    record.extra.insert(key.clone(), other.to_string());
                }
            }
        }
        Some(record)
    }
}

/// A complete (or explicitly incomplete) crawl of the discovery endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSnapshot {
    pub snapshot_id: String,
    pub base_url: String,
    pub fetched_at: DateTime<Utc>,
    pub records: Vec<SubmoltRecord>,
    pub pages_fetched: usize,
    pub tool_version: String,
    /// Records dropped because their id had already been seen.
    pub collisions: usize,
    /// Wire objects that could not be decoded.
    pub malformed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    schema: String,
    snapshot_id: String,
    base_url: String,
    fetched_at: DateTime<Utc>,
    tool_version: String,
    #[serde(default)]
    pages_fetched: usize,
    #[serde(default)]
    collisions: usize,
    #[serde(default)]
    malformed: usize,
    #[serde(default)]
    record_count: usize,
}

impl CorpusSnapshot {
    /// Content-derived identifier: same source and records, same id.
    pub fn content_id(base_url: &str, records: &[SubmoltRecord]) -> String {
        let mut parts: Vec<&[u8]> = vec![base_url.as_bytes()];
        for r in records {
            parts.push(r.id.as_bytes());
            parts.push(r.description.as_bytes());
        }
        format!("snap-{}", &sha256_parts(&parts)[..16])
    }

    /// Builds a snapshot from records in server order, keeping the first
    /// occurrence of each id.
    pub fn assemble(
        base_url: &str,
        records: impl IntoIterator<Item = SubmoltRecord>,
        pages_fetched: usize,
        fetched_at: DateTime<Utc>,
    ) -> Self {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut collisions = 0;
        for r in records {
            if seen.insert(r.id.clone()) {
                kept.push(r);
            } else {
                log::warn!("duplicate submolt id `{}` ignored", r.id);
                collisions += 1;
            }
        }
        Self {
            snapshot_id: Self::content_id(base_url, &kept),
            base_url: base_url.to_string(),
            fetched_at,
            records: kept,
            pages_fetched,
            tool_version: TOOL_VERSION.to_string(),
            collisions,
            malformed: 0,
        }
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let header = SnapshotHeader {
            schema: SNAPSHOT_SCHEMA.into(),
            snapshot_id: self.snapshot_id.clone(),
            base_url: self.base_url.clone(),
            fetched_at: self.fetched_at,
            tool_version: self.tool_version.clone(),
            pages_fetched: self.pages_fetched,
            collisions: self.collisions,
            malformed: self.malformed,
            record_count: self.records.len(),
        };
        let mut out = serde_json::to_vec(&header).map_err(|e| Error::json("snapshot header", e))?;
        out.push(b'\n');
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::json("snapshot record", e))?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(bytes: &[u8], context: &str) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::InvalidInput(format!("{context}: snapshot is not utf-8")))?;
        let mut lines = text.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("{context}: empty snapshot file")))?;
        let raw: Value = serde_json::from_str(first).map_err(|e| Error::json(context, e))?;
        let schema = raw.get("schema").and_then(Value::as_str).unwrap_or("");
        if schema != SNAPSHOT_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: SNAPSHOT_SCHEMA.into(),
                found: schema.into(),
            });
        }
        let header: SnapshotHeader =
            serde_json::from_value(raw).map_err(|e| Error::json(context, e))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let r: SubmoltRecord = serde_json::from_str(line)
                .map_err(|e| Error::json(format!("{context} line {}", i + 2), e))?;
            records.push(r);
        }
        let mut seen = HashSet::new();
        for r in &records {
            if r.id.is_empty() || !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "{context}: empty or duplicate record id `{}`",
                    r.id
                )));
            }
        }
        Ok(Self {
            snapshot_id: header.snapshot_id,
            base_url: header.base_url,
            fetched_at: header.fetched_at,
            records,
            pages_fetched: header.pages_fetched,
            tool_version: header.tool_version,
            collisions: header.collisions,
            malformed: header.malformed,
        })
    }
}

pub fn save_snapshot(snapshot: &CorpusSnapshot, path: &Path) -> Result<()> {
    crate::io::write_bytes(path, &snapshot.to_jsonl()?)
}

pub fn load_snapshot(path: &Path) -> Result<CorpusSnapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CorpusSnapshot::from_jsonl(&bytes, &path.display().to_string())
}

/// Where a partial crawl destined for `path` is written.
pub fn incomplete_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.incomplete.{}", ext.to_string_lossy()),
        None => format!("{stem}.incomplete"),
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> CorpusSnapshot {
        let mut a = SubmoltRecord::new("1", "whisky", "Highland single malt talk");
        a.created_at = Some("2026-01-30T12:00:00Z".parse().unwrap());
        a.extra.insert("subscribers".into(), "12".into());
        let b = SubmoltRecord::new("2", "empty", "");
        let c = SubmoltRecord::new("3", "kafe", "Café für Agenten ☕ — 日本語も");
        CorpusSnapshot::assemble(
            "http://localhost:1",
            vec![a, b, c],
            1,
            "2026-01-30T13:00:00Z".parse().unwrap(),
        )
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let snap = sample();
        let bytes = snap.to_jsonl().unwrap();
        let back = CorpusSnapshot::from_jsonl(&bytes, "mem").unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_jsonl().unwrap(), bytes);
        assert_eq!(back.records[2].description, "Café für Agenten ☕ — 日本語も");
    }

    #[test]
    fn header_line_shape() {
        let bytes = sample().to_jsonl().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["schema"], "snapshot/1");
        for key in ["snapshot_id", "base_url", "fetched_at", "tool_version"] {
            assert!(header.get(key).is_some(), "{key}");
        }
        assert_eq!(text.lines().count(), 4);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn rejects_future_schema() {
        let text = "{\"schema\":\"snapshot/2\",\"snapshot_id\":\"x\",\"base_url\":\"\",\"fetched_at\":\"2026-01-30T13:00:00Z\",\"tool_version\":\"9\"}\n";
        match CorpusSnapshot::from_jsonl(text.as_bytes(), "mem") {
            Err(Error::SchemaVersion { found, .. }) => assert_eq!(found, "snapshot/2"),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn assemble_dedups_keeping_first() {
        let recs = vec![
            SubmoltRecord::new("a", "a", "first"),
            SubmoltRecord::new("b", "b", "x"),
            SubmoltRecord::new("a", "a", "second"),
        ];
        let snap = CorpusSnapshot::assemble("u", recs, 2, Utc::now());
        assert_eq!(snap.records.len(), 2);
        assert_eq!(snap.collisions, 1);
        assert_eq!(snap.records[0].description, "first");
    }

    #[test]
    fn wire_decoding_tolerates_extras_and_missing_description() {
        let v: Value = serde_json::json!({
            "id": 42, "name": "gaming", "subscriber_count": 7, "owner": {"h": "x"},
            "created_at": "not a date", "description": null
        });
        let r = SubmoltRecord::from_wire(&v).unwrap();
        assert_eq!(r.id, "42");
        assert_eq!(r.description, "");
        assert_eq!(r.extra["subscriber_count"], "7");
        assert_eq!(r.extra["created_at"], "not a date");
        assert!(SubmoltRecord::from_wire(&serde_json::json!({"name": "no id"})).is_none());
        assert!(SubmoltRecord::from_wire(&serde_json::json!({"id": "", "name": "x"})).is_none());
        assert!(SubmoltRecord::from_wire(&serde_json::json!([1, 2])).is_none());
    }

    #[test]
    fn incomplete_path_keeps_extension() {
        assert_eq!(
            incomplete_path(Path::new("/tmp/out/snapshot.jsonl")),
            PathBuf::from("/tmp/out/snapshot.incomplete.jsonl")
        );
    }

    fn arb_record() -> impl Strategy<Value = SubmoltRecord> {
        (
            "[a-z0-9]{1,8}",
            "\\PC{0,12}",
            any::<String>(),
            proptest::option::of("\\PC{0,8}"),
            proptest::collection::btree_map("[a-z_]{1,6}", any::<String>(), 0..3),
        )
            .prop_map(|(id, name, description, creator, extra)| SubmoltRecord {
                id,
                name,
                display_name: None,
                description,
                created_at: None,
                creator,
                extra,
            })
    }

    proptest! {
        #[test]
        fn save_load_identity(records in proptest::collection::vec(arb_record(), 0..12)) {
            let snap = CorpusSnapshot::assemble("http://h", records, 3, "2026-01-30T00:00:00Z".parse().unwrap());
            let bytes = snap.to_jsonl().unwrap();
            let back = CorpusSnapshot::from_jsonl(&bytes, "prop").unwrap();
            prop_assert_eq!(&back, &snap);
            prop_assert_eq!(back.to_jsonl().unwrap(), bytes);
        }
    }
}
