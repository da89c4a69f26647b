//! Deterministic, dependency-free stand-in for a neural embedding model.
//!
//! Character trigrams of the lowercased, whitespace-normalized text are
//! counted, and each distinct trigram is scattered into the output through
//! a sparse signed random projection derived from `(seed, trigram)`. The
//! result is L2-normalized.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::preprocess::normalize_description;

/// Output coordinates touched by each trigram.
const TOUCHES_PER_TRIGRAM: usize = 8;

pub fn trigram_counts(text: &str) -> BTreeMap<String, u32> {
    let padded: Vec<char> = format!(" {} ", normalize_description(text).to_lowercase())
        .chars()
        .collect();
    let mut counts = BTreeMap::new();
    for w in padded.windows(3) {
        *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
    }
    counts
}

pub fn offline_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector> {
    if dim < 2 {
        return Err(Error::Config("offline embedding dimension must be at least 2".into()));
    }
    if normalize_description(text).is_empty() {
        return Err(Error::InvalidInput("cannot embed empty text".into()));
    }
    let mut acc = vec![0.0f64; dim];
    for (gram, count) in trigram_counts(text) {
        let digest = Sha256::new()
            .chain_update(seed.to_le_bytes())
            .chain_update(gram.as_bytes())
            .finalize();
        for chunk in digest.chunks_exact(4).take(TOUCHES_PER_TRIGRAM) {
            let word = u32::from_le_bytes(chunk.try_into().unwrap());
            let index = (word >> 1) as usize % dim;
            let sign = if word & 1 == 0 { 1.0 } else { -1.0 };
            acc[index] += sign * f64::from(count);
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every contribution cancelled; fall back to a fixed unit vector
        acc[0] = 1.0;
    } else {
        acc.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(EmbeddingVector(acc))
}

#[derive(Debug, Clone)]
pub struct OfflineEmbedder {
    dim: usize,
    seed: u64,
}

impl OfflineEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config("offline embedding dimension must be at least 2".into()));
        }
        Ok(Self { dim, seed })
    }
}

impl EmbeddingProvider for OfflineEmbedder {
    fn tag(&self) -> String {
        format!("offline/trigram-srp/d{}/s{}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn batch_size(&self) -> usize {
        256
    }

    fn concurrency(&self) -> usize {
        4
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        texts
            .iter()
            .map(|t| {
                offline_embed(t, self.dim, self.seed)
                    .map(|v| v.0.into_iter().map(|x| x as f32).collect())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_similarity;
    use std::collections::BTreeSet;

    fn jaccard(a: &str, b: &str) -> f64 {
        let grams = |s: &str| -> BTreeSet<String> {
            let chars: Vec<char> = format!(" {} ", s.to_lowercase()).chars().collect();
            chars.windows(3).map(|w| w.iter().collect()).collect()
        };
        let (x, y) = (grams(a), grams(b));
        x.intersection(&y).count() as f64 / x.union(&y).count() as f64
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let a = offline_embed("Whisky tasting club", 256, 3).unwrap();
        let b = offline_embed("Whisky tasting club", 256, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 1.0);
        for text in ["x", "a much longer description with many words", "日本語"] {
            let v = offline_embed(text, 97, 11).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
        assert_ne!(offline_embed("abc", 64, 1).unwrap(), offline_embed("abc", 64, 2).unwrap());
    }

    #[test]
    fn shared_trigrams_raise_similarity() {
        let (a, b, c) = ("whisky tasting club", "whisky tasting society", "quantum risk markets");
        // trigram-overlap oracle fixes the expected ordering
        assert!(jaccard(a, b) > jaccard(a, c));
        for seed in 0..5 {
            let va = offline_embed(a, 256, seed).unwrap();
            let vb = offline_embed(b, 256, seed).unwrap();
            let vc = offline_embed(c, 256, seed).unwrap();
            assert!(cosine_similarity(&va, &vb).unwrap() > cosine_similarity(&va, &vc).unwrap());
        }
    }

    #[test]
    fn rejects_empty_and_tiny_dims() {
        assert!(offline_embed("   ", 8, 0).is_err());
        assert!(offline_embed("x", 1, 0).is_err());
    }

    #[test]
    fn frozen_trigram_counts() {
        let c = trigram_counts("Ab  ab");
        // " ab", "ab ", "b a", " ab" again, "ab " again
        assert_eq!(c.get(" ab"), Some(&2));
        assert_eq!(c.get("ab "), Some(&2));
        assert_eq!(c.get("b a"), Some(&1));
        assert_eq!(c.values().sum::<u32>(), 5);
    }
}
