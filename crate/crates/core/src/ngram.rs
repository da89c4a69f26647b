//! Per-cluster n-gram frequency profiles.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::preprocess::RefinedCorpus;

pub const TOKENIZER_VERSION: &str = "alnum-lower/1";
pub const DEFAULT_N_MIN: usize = 2;
pub const DEFAULT_N_MAX: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub source_record_id: String,
    pub tokens: Vec<String>,
}

/// Lowercases, turns every non-alphanumeric codepoint into a separator and
/// splits.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cleaned.extend(ch.to_lowercase());
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_owned).collect()
}

pub fn token_stream(record_id: &str, text: &str) -> TokenStream {
    TokenStream { source_record_id: record_id.to_owned(), tokens: tokenize(text) }
}

/// Counts every contiguous window of length `n_min..=n_max`.
pub fn extract_ngrams(tokens: &[String], n_min: usize, n_max: usize) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    add_ngrams(&mut out, tokens, n_min, n_max);
    out
}

fn add_ngrams(out: &mut BTreeMap<String, u64>, tokens: &[String], n_min: usize, n_max: usize) {
    for n in n_min.max(1)..=n_max {
        for window in tokens.windows(n) {
            *out.entry(window.join(" ")).or_insert(0) += 1;
        }
    }
}

/// Closed-form window count for a stream of length `len`.
pub fn expected_gram_total(len: usize, n_min: usize, n_max: usize) -> u64 {
    (n_min..=n_max).map(|n| (len + 1).saturating_sub(n) as u64).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramProfile {
    #[serde(rename = "cluster")]
    pub cluster_index: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub member_count: usize,
    pub tokenizer_version: String,
    pub counts: BTreeMap<String, u64>,
}

impl NGramProfile {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

fn check_range(n_min: usize, n_max: usize) -> Result<()> {
    if n_min < 1 || n_min > n_max {
        return Err(Error::Config(format!("invalid n-gram range [{n_min}, {n_max}]")));
    }
    Ok(())
}

/// Profile of a set of descriptions.
pub fn profile_texts<'a>(
    cluster_index: usize,
    texts: impl IntoParallelIterator<Item = &'a str>,
    n_min: usize,
    n_max: usize,
) -> Result<NGramProfile> {
    check_range(n_min, n_max)?;
    let (counts, member_count) = texts
        .into_par_iter()
        .map(|t| (extract_ngrams(&tokenize(t), n_min, n_max), 1usize))
        .reduce(
            || (BTreeMap::new(), 0),
            |(mut a, na), (b, nb)| {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
                (a, na + nb)
            },
        );
    Ok(NGramProfile {
        cluster_index,
        n_min,
        n_max,
        member_count,
        tokenizer_version: TOKENIZER_VERSION.into(),
        counts,
    })
}

pub fn profile_cluster(
    corpus: &RefinedCorpus,
    model: &ClusterModel,
    cluster_index: usize,
    n_min: usize,
    n_max: usize,
) -> Result<NGramProfile> {
    profile_all(corpus, model, n_min, n_max)?
        .into_iter()
        .nth(cluster_index)
        .ok_or_else(|| Error::InvalidInput(format!("cluster index {cluster_index} >= k = {}", model.k)))
}

/// Profiles for every cluster, in cluster index order.
pub fn profile_all(
    corpus: &RefinedCorpus,
    model: &ClusterModel,
    n_min: usize,
    n_max: usize,
) -> Result<Vec<NGramProfile>> {
    let by_id: HashMap<&str, &str> = corpus
        .records
        .iter()
        .map(|r| (r.id.as_str(), r.description.as_str()))
        .collect();
    let mut texts: Vec<Vec<&str>> = vec![Vec::new(); model.k];
    for (id, &c) in model.record_ids.iter().zip(&model.assignments) {
        let text = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("clustered record {id} not in refined corpus")))?;
        texts[c].push(text);
    }
    texts
        .into_iter()
        .enumerate()
        .map(|(c, t)| profile_texts(c, t, n_min, n_max))
        .collect()
}

/// Most frequent phrases, count descending then phrase ascending.
pub fn top_phrases(profile: &NGramProfile, limit: usize) -> Vec<(String, u64)> {
    let mut all: Vec<(String, u64)> = profile.counts.iter().map(|(k, &v)| (k.clone(), v)).collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(limit);
    all
}

pub fn save_profiles(dir: &Path, profiles: &[NGramProfile]) -> Result<()> {
    for p in profiles {
        crate::io::write_json(&dir.join(format!("cluster_{}.json", p.cluster_index)), p)?;
    }
    Ok(())
}

pub fn load_profiles(dir: &Path, k: usize) -> Result<Vec<NGramProfile>> {
    (0..k)
        .map(|c| crate::io::read_json(&dir.join(format!("cluster_{c}.json"))))
        .collect()
}
