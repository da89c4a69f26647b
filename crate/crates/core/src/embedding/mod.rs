//! Description embeddings: pluggable providers, a content-addressed cache
//! and the row-aligned matrix handed to clustering and projection.

mod cache;
mod offline;
mod remote;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::binfmt::{self, FloatMatrix};
use crate::corpus::RetryPolicy;
use crate::digest::sha256_parts;
use crate::error::{Error, Result};
use crate::preprocess::{normalize_description, RefinedCorpus};
use crate::registry::Registry;

pub use cache::EmbeddingCache;
pub use offline::{offline_embed, OfflineEmbedder};
pub use remote::RemoteEmbedder;

pub const DEFAULT_REMOTE_MODEL: &str = "text-embedding-3-large";
pub const DEFAULT_REMOTE_DIM: usize = 3072;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<&[f32]> for EmbeddingVector {
    fn from(row: &[f32]) -> Self {
        EmbeddingVector(row.iter().map(|&v| f64::from(v)).collect())
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (mut dot, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::InvalidInput("cosine of a zero-norm vector".into()));
    }
    // sqrt(aa * bb) rather than sqrt(aa) * sqrt(bb): exact 1.0 for a == b
    Ok((dot / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Row-major matrix of embeddings, one row per record id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    record_ids: Vec<String>,
    data: Vec<f32>,
    provider_tag: String,
}

impl EmbeddingMatrix {
    pub fn new(
        dim: usize,
        record_ids: Vec<String>,
        data: Vec<f32>,
        provider_tag: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        if data.len() != dim * record_ids.len() {
            return Err(Error::Dimension {
                expected: dim * record_ids.len(),
                found: data.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = record_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::IdMismatch(format!("duplicate record id `{dup}`")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite embedding value".into()));
        }
        Ok(Self {
            dim,
            record_ids,
            data,
            provider_tag: provider_tag.into(),
        })
    }

    /// Convenience constructor from f64 rows (rounded to f32 storage).
    pub fn from_rows(
        record_ids: Vec<String>,
        rows: &[Vec<f64>],
        provider_tag: impl Into<String>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: bad.len(),
            });
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(dim, record_ids, data, provider_tag)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    pub fn record_ids(&self) -> &[String] {
        &self.record_ids
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn vector(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector::from(self.row(i))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Copy with every row scaled to unit L2 norm (zero rows untouched).
    pub fn l2_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.dim) {
            let n = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            if n > 0.0 {
                for v in row.iter_mut() {
                    *v = (f64::from(*v) / n) as f32;
                }
            }
        }
        Self {
            data,
            ..self.clone()
        }
    }

    /// Rows reordered by `order` (a permutation of row indices).
    pub fn permuted(&self, order: &[usize]) -> Self {
        let record_ids = order.iter().map(|&i| self.record_ids[i].clone()).collect();
        let data = order.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self {
            dim: self.dim,
            record_ids,
            data,
            provider_tag: self.provider_tag.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let m = FloatMatrix {
            dim: self.dim,
            tag: self.provider_tag.clone(),
            values: self.data.clone(),
        };
        binfmt::write_with_ids(path, &m, &self.record_ids)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (m, ids) = binfmt::read_with_ids(path)?;
        Self::new(m.dim, ids, m.values, m.tag)
    }
}

/// Settings for building an embedding provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Registered provider name: `offline` or `remote`.
    pub kind: String,
    pub dim: usize,
    pub seed: u64,
    pub endpoint: String,
    pub model: String,
    pub batch_size: usize,
    pub concurrency: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub api_key_env: String,
    /// Request field carrying the model identifier.
    pub model_field: String,
    /// Request field carrying the input texts.
    pub input_field: String,
    /// JSON pointer to the response array of per-input items.
    pub response_pointer: String,
    /// Field of each response item holding the vector; empty when the
    /// item itself is the vector.
    pub vector_field: String,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: "offline".into(),
            dim: DEFAULT_REMOTE_DIM,
            seed: 0,
            endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: DEFAULT_REMOTE_MODEL.into(),
            batch_size: 64,
            concurrency: 4,
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 60,
            api_key_env: "SILICO_EMBED_KEY".into(),
            model_field: "model".into(),
            input_field: "input".into(),
            response_pointer: "/data".into(),
            vector_field: "embedding".into(),
            cache_dir: None,
        }
    }
}

impl ProviderConfig {
    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.backoff_ms),
            max_delay: Duration::from_secs(30),
        }
    }
}

/// A text-to-vector backend.
pub trait EmbeddingProvider: Send + Sync {
    /// Provider plus model identity; part of every cache key.
    fn tag(&self) -> String;
    fn dim(&self) -> usize;
    fn batch_size(&self) -> usize {
        64
    }
    fn concurrency(&self) -> usize {
        1
    }
    /// One vector per input, in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

pub fn embedder_registry() -> Registry<Box<dyn EmbeddingProvider>, ProviderConfig> {
    let mut reg = Registry::new("embedding provider");
    reg.register("offline", |cfg: &ProviderConfig| {
        Ok(Box::new(OfflineEmbedder::new(cfg.dim, cfg.seed)?) as Box<dyn EmbeddingProvider>)
    });
    reg.register("remote", |cfg: &ProviderConfig| {
        Ok(Box::new(RemoteEmbedder::new(cfg.clone())?) as Box<dyn EmbeddingProvider>)
    });
    reg
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedStats {
    pub unique_texts: usize,
    pub cache_hits: usize,
    pub computed: usize,
    pub provider_calls: usize,
}

pub fn cache_key(provider_tag: &str, normalized: &str) -> String {
    sha256_parts(&[provider_tag.as_bytes(), normalized.as_bytes()])
}

/// Embeds every record of `corpus` in corpus order. Texts are normalized
/// before embedding so the cache key and the provider input agree.
pub fn embed_corpus(
    corpus: &RefinedCorpus,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<(EmbeddingMatrix, EmbedStats)> {
    if corpus.records.is_empty() {
        return Err(Error::InvalidInput("cannot embed an empty corpus".into()));
    }
    let tag = provider.tag();
    let dim = provider.dim();
    let texts: Vec<String> = corpus
        .records
        .iter()
        .map(|r| normalize_description(&r.description))
        .collect();
    let keys: Vec<String> = texts.iter().map(|t| cache_key(&tag, t)).collect();

    let mut stats = EmbedStats::default();
    let mut vectors: HashMap<&str, Vec<f32>> = HashMap::new();
    let mut pending: Vec<(&str, &str)> = Vec::new();
    let mut queued = std::collections::HashSet::new();
    for (key, text) in keys.iter().zip(&texts) {
        if vectors.contains_key(key.as_str()) || !queued.insert(key.as_str()) {
            continue;
        }
        stats.unique_texts += 1;
        match cache.map(|c| c.get(key, dim)).transpose()?.flatten() {
            Some(v) => {
                stats.cache_hits += 1;
                vectors.insert(key, v);
            }
            None => pending.push((key.as_str(), text.as_str())),
        }
    }

    let batch_size = provider.batch_size().max(1);
    let batches: Vec<&[(&str, &str)]> = pending.chunks(batch_size).collect();
    for wave in batches.chunks(provider.concurrency().max(1)) {
        let results: Vec<Result<Vec<Vec<f32>>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    scope.spawn(move || {
                        let inputs: Vec<String> = batch.iter().map(|(_, t)| t.to_string()).collect();
                        let out = provider.embed_batch(&inputs)?;
                        if out.len() != inputs.len() {
                            return Err(Error::Provider(format!(
                                "provider returned {} vectors for {} inputs",
                                out.len(),
                                inputs.len()
                            )));
                        }
                        if let Some(bad) = out.iter().find(|v| v.len() != dim) {
                            return Err(Error::Dimension {
                                expected: dim,
                                found: bad.len(),
                            });
                        }
                        if out.iter().flatten().any(|v| !v.is_finite()) {
                            return Err(Error::Provider("provider returned non-finite values".into()));
                        }
                        Ok(out)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        for (batch, result) in wave.iter().zip(results) {
            let out = result?;
            stats.provider_calls += 1;
            stats.computed += out.len();
            for ((key, _), v) in batch.iter().zip(out) {
                if let Some(c) = cache {
                    c.put(key, &v)?;
                }
                vectors.insert(key, v);
            }
        }
    }

    let mut data = Vec::with_capacity(dim * keys.len());
    for key in &keys {
        data.extend_from_slice(&vectors[key.as_str()]);
    }
    let ids = corpus.records.iter().map(|r| r.id.clone()).collect();
    Ok((EmbeddingMatrix::new(dim, ids, data, tag)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SubmoltRecord;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn corpus(descs: &[&str]) -> RefinedCorpus {
        RefinedCorpus {
            source_snapshot_id: "s".into(),
            records: descs
                .iter()
                .enumerate()
                .map(|(i, d)| SubmoltRecord::new(format!("r{i}"), "n", *d))
                .collect(),
            pruned_sparse: 0,
            pruned_template: 0,
            frequency_threshold: 3,
            normalization_version: "t".into(),
        }
    }

    struct Counting {
        inner: OfflineEmbedder,
        calls: AtomicUsize,
        dim_override: Option<usize>,
    }

    impl EmbeddingProvider for Counting {
        fn tag(&self) -> String {
            self.inner.tag()
        }
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn batch_size(&self) -> usize {
            2
        }
        fn concurrency(&self) -> usize {
            3
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut out = self.inner.embed_batch(texts)?;
            if let Some(d) = self.dim_override {
                out.iter_mut().for_each(|v| v.resize(d, 0.0));
            }
            Ok(out)
        }
    }

    fn counting(dim_override: Option<usize>) -> Counting {
        Counting {
            inner: OfflineEmbedder::new(32, 7).unwrap(),
            calls: AtomicUsize::new(0),
            dim_override,
        }
    }

    #[test]
    fn cosine_examples() {
        let v = |x: &[f64]| EmbeddingVector(x.to_vec());
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = cosine_similarity(&v(&[1.0, 2.0, 2.0]), &v(&[2.0, 4.0, 4.0])).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).is_err());
        assert!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn identical_descriptions_share_rows_and_cache_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let c = corpus(&["whisky tasting", "gaming hub", "whisky  tasting", "risk desk", "x y z"]);
        let p = counting(None);
        let (m, stats) = embed_corpus(&c, &p, Some(&cache)).unwrap();
        assert_eq!(m.len(), 5);
        assert_eq!(m.row(0), m.row(2));
        assert_eq!(stats.unique_texts, 4);
        assert_eq!(stats.computed, 4);
        assert_eq!(m.record_ids()[3], "r3");

        let p2 = counting(None);
        let (m2, stats2) = embed_corpus(&c, &p2, Some(&cache)).unwrap();
        assert_eq!(p2.calls.load(Ordering::SeqCst), 0);
        assert_eq!(stats2.cache_hits, 4);
        assert_eq!(m, m2);
    }

    #[test]
    fn cache_deletion_reproduces_bit_exact() {
        let c = corpus(&["alpha beta", "gamma delta", "epsilon"]);
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let (first, _) = embed_corpus(&c, &counting(None), Some(&cache)).unwrap();
        drop(cache);
        std::fs::remove_dir_all(dir.path()).unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let (second, stats) = embed_corpus(&c, &counting(None), Some(&cache)).unwrap();
        assert_eq!(stats.cache_hits, 0);
        assert_eq!(first.as_slice(), second.as_slice());
    }

    #[test]
    fn dimension_mismatch_aborts() {
        let c = corpus(&["alpha", "beta"]);
        let err = embed_corpus(&c, &counting(Some(31)), None).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 32, found: 31 }));
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(embed_corpus(&corpus(&[]), &counting(None), None).is_err());
    }

    #[test]
    fn matrix_file_roundtrip_and_shape() {
        let dir = tempfile::tempdir().unwrap();
        let p = OfflineEmbedder::new(3072, 1).unwrap();
        let descs: Vec<String> = (0..20).map(|i| format!("submolt number {i} about things")).collect();
        let refs: Vec<&str> = descs.iter().map(String::as_str).collect();
        let (m, _) = embed_corpus(&corpus(&refs), &p, None).unwrap();
        assert_eq!((m.len(), m.dim()), (20, 3072));
        let path = dir.path().join("emb.bin");
        m.save(&path).unwrap();
        assert_eq!(EmbeddingMatrix::load(&path).unwrap(), m);
    }

    #[test]
    fn registry_builds_offline() {
        let cfg = ProviderConfig {
            dim: 16,
            ..Default::default()
        };
        let p = embedder_registry().build("offline", &cfg).unwrap();
        assert_eq!(p.dim(), 16);
        assert!(embedder_registry().build("word2vec", &cfg).is_err());
    }
}
