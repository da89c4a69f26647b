//! Row-major float matrix files shared by embeddings, centroids and
//! projections.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "SLMX"
//! version    u32      1
//! dim        u32
//! count      u64
//! tag_len    u32
//! tag        tag_len bytes of UTF-8
//! values     count * dim f32
//! ```
//!
//! Record ids live in a JSON sidecar next to the matrix (`<file>.ids.json`).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SLMX";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FloatMatrix {
    pub dim: usize,
    pub tag: String,
    pub values: Vec<f32>,
}

impl FloatMatrix {
    pub fn count(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }
}

pub fn encode(matrix: &FloatMatrix) -> Vec<u8> {
    let tag = matrix.tag.as_bytes();
    let mut out = Vec::with_capacity(24 + tag.len() + matrix.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.dim as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.count() as u64).to_le_bytes());
    out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
    out.extend_from_slice(tag);
    for v in &matrix.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FloatMatrix> {
    let bad = |msg: &str| Error::InvalidInput(format!("matrix file: {msg}"));
    let mut cursor = Reader { bytes, pos: 0 };
    if cursor.take(4).ok_or_else(|| bad("truncated header"))? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = cursor.u32().ok_or_else(|| bad("truncated header"))?;
    if version != VERSION {
        return Err(Error::SchemaVersion {
            expected: VERSION.to_string(),
            found: version.to_string(),
        });
    }
    let dim = cursor.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let count = cursor.u64().ok_or_else(|| bad("truncated header"))? as usize;
    let tag_len = cursor.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let tag = cursor.take(tag_len).ok_or_else(|| bad("truncated tag"))?;
    let tag = String::from_utf8(tag.to_vec()).map_err(|_| bad("tag is not utf-8"))?;
    let body = cursor.take(dim * count * 4).ok_or_else(|| bad("truncated body"))?;
    if cursor.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FloatMatrix { dim, tag, values })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".ids.json");
    path.with_file_name(name)
}

/// Writes the matrix and its id sidecar.
pub fn write_with_ids(path: &Path, matrix: &FloatMatrix, ids: &[String]) -> Result<()> {
    if ids.len() != matrix.count() {
        return Err(Error::IdMismatch(format!(
            "{} ids for {} rows",
            ids.len(),
            matrix.count()
        )));
    }
    crate::io::write_bytes(path, &encode(matrix))?;
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(ids).map_err(|e| Error::json("id sidecar", e))?;
    crate::io::write_bytes(&side, &json)
}

pub fn read_with_ids(path: &Path) -> Result<(FloatMatrix, Vec<String>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let matrix = decode(&bytes)?;
    let side = sidecar_path(path);
    let raw = fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let ids: Vec<String> =
        serde_json::from_slice(&raw).map_err(|e| Error::json(side.display().to_string(), e))?;
    if ids.len() != matrix.count() {
        return Err(Error::IdMismatch(format!(
            "{} ids for {} rows in {}",
            ids.len(),
            matrix.count(),
            path.display()
        )));
    }
    Ok((matrix, ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_roundtrip() {
        let m = FloatMatrix {
            dim: 3,
            tag: "offline/trigram".into(),
            values: vec![1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 7.0],
        };
        let bytes = encode(&m);
        assert_eq!(&bytes[..4], b"SLMX");
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_other_versions_and_truncation() {
        let m = FloatMatrix {
            dim: 1,
            tag: String::new(),
            values: vec![1.0],
        };
        let mut bytes = encode(&m);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(Error::SchemaVersion { .. })));
    }
}
