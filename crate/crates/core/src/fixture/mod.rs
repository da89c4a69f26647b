//! Deterministic synthetic corpora with planted structure, and a local HTTP
//! service that serves them in the discovery endpoint's wire shape.

mod server;
mod vocab;

use std::collections::HashSet;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{save_snapshot, CorpusSnapshot, SubmoltRecord};
use crate::error::{Error, Result};

pub use server::{serve, serve_raw, FixtureServer, RequestLogEntry, ServeOptions, SHUTDOWN_PATH};
pub use vocab::THEMES;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeSpec {
    pub name: String,
    pub vocabulary: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateGroup {
    pub text: String,
    pub copies: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub themes: Vec<ThemeSpec>,
    #[serde(default)]
    pub template_groups: Vec<TemplateGroup>,
    #[serde(default)]
    pub sparse_count: usize,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
}

fn default_page_size() -> usize {
    100
}

fn builtin_theme(i: usize, count: usize) -> ThemeSpec {
    let (name, words) = vocab::THEMES[i % vocab::THEMES.len()];
    ThemeSpec {
        name: name.to_string(),
        vocabulary: words.iter().map(|w| w.to_string()).collect(),
        count,
    }
}

impl CorpusSpec {
    /// `n_themes` built-in themes of `per_theme` records each.
    pub fn themed(seed: u64, n_themes: usize, per_theme: usize) -> Self {
        Self {
            seed,
            themes: (0..n_themes).map(|i| builtin_theme(i, per_theme)).collect(),
            template_groups: Vec::new(),
            sparse_count: 0,
            page_size: default_page_size(),
        }
    }

    /// Eight themes of 100 records, two five-copy template groups and ten
    /// sparse records (820 records in total).
    pub fn eight_theme(seed: u64) -> Self {
        let mut spec = Self::themed(seed, 8, 100);
        spec.template_groups = (0..2)
            .map(|i| TemplateGroup {
                text: vocab::TEMPLATE_STEMS[i].to_string(),
                copies: 5,
            })
            .collect();
        spec.sparse_count = 10;
        spec
    }

    /// A 12,758-record corpus with 279 sparse records, template groups
    /// totalling 8,317 over-threshold copies and 4,162 distinct themed
    /// descriptions.
    pub fn full_scale(seed: u64) -> Self {
        const THEMED: usize = 4_162;
        let mut spec = Self::themed(seed, 8, THEMED / 8);
        for theme in spec.themes.iter_mut().take(THEMED % 8) {
            theme.count += 1;
        }
        let copies = [
            2000, 1500, 1200, 900, 700, 500, 400, 300, 250, 200, 150, 100, 50, 40, 27,
        ];
        spec.template_groups = copies
            .iter()
            .enumerate()
            .map(|(i, &c)| TemplateGroup {
                text: format!(
                    "{} ({})",
                    vocab::TEMPLATE_STEMS[i % vocab::TEMPLATE_STEMS.len()],
                    i / vocab::TEMPLATE_STEMS.len() + 1
                ),
                copies: c,
            })
            .collect();
        spec.sparse_count = 279;
        spec
    }

    pub fn total_records(&self) -> usize {
        self.themes.iter().map(|t| t.count).sum::<usize>()
            + self.template_groups.iter().map(|g| g.copies).sum::<usize>()
            + self.sparse_count
    }

    pub fn validate(&self) -> Result<()> {
        if self.page_size == 0 {
            return Err(Error::Config("fixture page size must be at least 1".into()));
        }
        if let Some(t) = self.themes.iter().find(|t| t.count > 0 && t.vocabulary.is_empty()) {
            return Err(Error::Config(format!("theme `{}` has no vocabulary", t.name)));
        }
        Ok(())
    }
}

/// What a synthetic record was generated from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Planted {
    Theme { theme: String, index: usize },
    Template { group: usize },
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(flatten)]
    pub planted: Planted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Planted theme index per record id, for themed records only.
    pub fn theme_labels(&self) -> std::collections::HashMap<&str, usize> {
        self.entries
            .iter()
            .filter_map(|e| match e.planted {
                Planted::Theme { index, .. } => Some((e.id.as_str(), index)),
                _ => None,
            })
            .collect()
    }
}

const SPARSE_FORMS: [&str; 4] = ["   ", "", "\t\n", " \u{3000} "];

pub fn generate_corpus(spec: &CorpusSpec) -> Result<(Vec<SubmoltRecord>, Manifest)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut used: HashSet<String> = spec.template_groups.iter().map(|g| g.text.clone()).collect();
    let mut items: Vec<(String, Planted, String)> = Vec::with_capacity(spec.total_records());

    for (ti, theme) in spec.themes.iter().enumerate() {
        for j in 0..theme.count {
            let mut text = String::new();
            for _attempt in 0..100 {
                let len = rng.gen_range(5..=15);
                text = (0..len)
                    .map(|_| theme.vocabulary.choose(&mut rng).expect("non-empty").as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                if !used.contains(&text) {
                    break;
                }
            }
            used.insert(text.clone());
            let handle = format!("{}-{j}", theme.name.replace('_', "-"));
            items.push((text, Planted::Theme { theme: theme.name.clone(), index: ti }, handle));
        }
    }
    for (gi, group) in spec.template_groups.iter().enumerate() {
        for j in 0..group.copies {
            items.push((group.text.clone(), Planted::Template { group: gi }, format!("tpl{gi}-{j}")));
        }
    }
    for j in 0..spec.sparse_count {
        items.push((SPARSE_FORMS[j % SPARSE_FORMS.len()].to_string(), Planted::Sparse, format!("blank-{j}")));
    }
    items.shuffle(&mut rng);

    let epoch: DateTime<Utc> = "2026-01-28T00:00:00Z".parse().expect("valid timestamp");
    let mut records = Vec::with_capacity(items.len());
    let mut entries = Vec::with_capacity(items.len());
    for (i, (text, planted, handle)) in items.into_iter().enumerate() {
        let id = format!("sm{:06}", i + 1);
        let mut r = SubmoltRecord::new(id.clone(), handle, text);
        r.created_at = Some(epoch + Duration::seconds(37 * i as i64));
        r.creator = Some(format!("agent-{}", rng.gen_range(0..500u32)));
        records.push(r);
        entries.push(ManifestEntry { id, planted });
    }
    Ok((records, Manifest { seed: spec.seed, entries }))
}

/// Writes `corpus.jsonl` (snapshot format) and `manifest.json` into `dir`.
pub fn write_fixture(dir: &Path, spec: &CorpusSpec) -> Result<(CorpusSnapshot, Manifest)> {
    let (records, manifest) = generate_corpus(spec)?;
    let pages = records.len().div_ceil(spec.page_size).max(1);
    let fetched: DateTime<Utc> = "2026-01-30T00:00:00Z".parse().expect("valid timestamp");
    let snapshot = CorpusSnapshot::assemble(&format!("fixture://seed/{}", spec.seed), records, pages, fetched);
    save_snapshot(&snapshot, &dir.join("corpus.jsonl"))?;
    crate::io::write_json(&dir.join("manifest.json"), &manifest)?;
    crate::io::write_json(&dir.join("spec.json"), spec)?;
    Ok((snapshot, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub blobs: usize,
    pub per_blob: usize,
    pub dim: usize,
    pub sigma: f64,
    /// Minimum distance between any two blob centers.
    pub min_separation: f64,
    pub seed: u64,
}

/// Isotropic Gaussian blobs. Returns shuffled points and their planted blob
/// labels.
pub fn gaussian_blobs(spec: BlobSpec) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let half = spec.min_separation.max(spec.sigma) * (spec.blobs as f64).sqrt().max(1.0);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.blobs);
    while centers.len() < spec.blobs {
        let c: Vec<f64> = (0..spec.dim).map(|_| rng.gen_range(-half..half)).collect();
        let ok = centers.iter().all(|o| {
            o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= spec.min_separation
        });
        if ok {
            centers.push(c);
        }
    }
    let noise = Normal::new(0.0, spec.sigma).expect("finite sigma");
    let mut points: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.blobs * spec.per_blob);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..spec.per_blob {
            points.push((c.iter().map(|&x| x + noise.sample(&mut rng)).collect(), label));
        }
    }
    points.shuffle(&mut rng);
    points.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::refine;

    #[test]
    fn eight_theme_arithmetic() {
        let spec = CorpusSpec::eight_theme(1);
        let (records, manifest) = generate_corpus(&spec).unwrap();
        assert_eq!(records.len(), 820);
        assert_eq!(manifest.entries.len(), 820);
        assert_eq!(manifest.theme_labels().len(), 800);
        for r in &records {
            let n = r.description.split_whitespace().count();
            if manifest.theme_labels().contains_key(r.id.as_str()) {
                assert!((5..=15).contains(&n));
            }
        }
    }

    #[test]
    fn sparse_only() {
        let spec = CorpusSpec {
            seed: 3,
            themes: vec![],
            template_groups: vec![],
            sparse_count: 3,
            page_size: 10,
        };
        let (records, _) = generate_corpus(&spec).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.description.trim().is_empty()));
    }

    #[test]
    fn seeded_determinism() {
        let spec = CorpusSpec::eight_theme(42);
        assert_eq!(generate_corpus(&spec).unwrap(), generate_corpus(&spec).unwrap());
        assert_ne!(
            generate_corpus(&spec).unwrap().0,
            generate_corpus(&CorpusSpec::eight_theme(43)).unwrap().0
        );
    }

    #[test]
    fn full_scale_counts() {
        let spec = CorpusSpec::full_scale(2026);
        assert_eq!(spec.total_records(), 12_758);
        assert!(spec.template_groups.iter().all(|g| g.copies > 3));
        assert_eq!(spec.template_groups.iter().map(|g| g.copies).sum::<usize>(), 8_317);
        let (records, _) = generate_corpus(&spec).unwrap();
        let snap = CorpusSnapshot::assemble("x", records, 1, Utc::now());
        let refined = refine(&snap, 3).unwrap();
        assert_eq!(
            (refined.pruned_sparse, refined.pruned_template, refined.records.len()),
            (279, 8_317, 4_162)
        );
    }

    #[test]
    fn blobs_respect_separation() {
        let spec = BlobSpec { blobs: 8, per_blob: 10, dim: 16, sigma: 1.0, min_separation: 20.0, seed: 5 };
        let (pts, labels) = gaussian_blobs(spec);
        assert_eq!(pts.len(), 80);
        assert_eq!(labels.iter().filter(|&&l| l == 7).count(), 10);
        assert!(pts.iter().all(|p| p.len() == 16));
    }
}
