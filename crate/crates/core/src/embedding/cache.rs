use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{Error, Result};

/// One file per content hash (`<root>/<hh>/<hash>.f32`, raw little-endian
/// f32) plus an append-only `index.tsv` of `hash\tdim` lines.
#[derive(Debug)]
pub struct EmbeddingCache {
    root: PathBuf,
    index: Mutex<()>,
}

impl EmbeddingCache {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            index: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.root.join(shard).join(format!("{key}.f32"))
    }

    pub fn get(&self, key: &str, dim: usize) -> Result<Option<Vec<f32>>> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        if bytes.len() != dim * 4 {
            log::warn!(
                "cache entry {} has {} bytes, expected {}; ignoring",
                path.display(),
                bytes.len(),
                dim * 4
            );
            return Ok(None);
        }
        Ok(Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ))
    }

    pub fn put(&self, key: &str, vector: &[f32]) -> Result<()> {
        let bytes: Vec<u8> = vector.iter().flat_map(|v| v.to_le_bytes()).collect();
        crate::io::write_bytes(&self.entry_path(key), &bytes)?;
        let _guard = self.index.lock().expect("cache index lock");
        let index = self.root.join("index.tsv");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index)
            .map_err(|e| Error::io(&index, e))?;
        file.write_all(format!("{key}\t{}\n", vector.len()).as_bytes())
            .map_err(|e| Error::io(&index, e))
    }

    pub fn len(&self) -> usize {
        fs::read_to_string(self.root.join("index.tsv"))
            .map(|s| s.lines().count())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_and_size_guard() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        assert_eq!(cache.get("abcd", 2).unwrap(), None);
        cache.put("abcd", &[1.5, -2.0]).unwrap();
        assert_eq!(cache.get("abcd", 2).unwrap(), Some(vec![1.5, -2.0]));
        assert_eq!(cache.get("abcd", 3).unwrap(), None);
        assert_eq!(cache.len(), 1);
    }
}
