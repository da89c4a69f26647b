//! Run configuration: one TOML file, overridden by flags, with the base URL
//! falling back to the environment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use silico_core::corpus::{ClientConfig, RetryPolicy, API_KEY_ENV, BASE_URL_ENV};
use silico_core::embedding::ProviderConfig;
use silico_core::preprocess::DEFAULT_TEMPLATE_THRESHOLD;
use silico_core::projection::TsneOptions;
use silico_core::thematic::VisionConfig;
use silico_core::{Error, Result};

pub const DEFAULT_BASE_URL: &str = "https://www.moltbook.com";
pub const DEFAULT_MASTER_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub outdir: PathBuf,
    pub master_seed: u64,
    pub crawl: CrawlSection,
    pub preprocess: PreprocessSection,
    pub embed: ProviderConfig,
    pub cluster: ClusterSection,
    pub project: TsneOptions,
    pub ngrams: NgramSection,
    pub render: RenderSection,
    pub discover: VisionConfig,
    pub review: ReviewSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            outdir: PathBuf::from("run"),
            master_seed: DEFAULT_MASTER_SEED,
            crawl: CrawlSection::default(),
            preprocess: PreprocessSection::default(),
            embed: ProviderConfig::default(),
            cluster: ClusterSection::default(),
            project: TsneOptions::default(),
            ngrams: NgramSection::default(),
            render: RenderSection::default(),
            discover: VisionConfig::default(),
            review: ReviewSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrawlSection {
    /// Unset means: `SILICO_BASE_URL`, then the built-in default.
    pub base_url: Option<String>,
    pub path: String,
    pub pagination: String,
    pub page_size: usize,
    /// Requests per second.
    pub rate_limit: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Name of the environment variable holding the bearer key.
    pub api_key_env: String,
    pub records_field: String,
    pub max_pages: Option<usize>,
    /// Replay an existing snapshot file instead of contacting the platform.
    pub snapshot: Option<PathBuf>,
}

impl Default for CrawlSection {
    fn default() -> Self {
        let client = ClientConfig::default();
        Self {
            base_url: None,
            path: client.path,
            pagination: client.pagination,
            page_size: client.page_size,
            rate_limit: client.rate_limit,
            max_retries: client.retry.max_retries,
            backoff_ms: client.retry.base_delay.as_millis() as u64,
            timeout_secs: client.timeout.as_secs(),
            api_key_env: API_KEY_ENV.into(),
            records_field: client.records_field,
            max_pages: None,
            snapshot: None,
        }
    }
}

impl CrawlSection {
    pub fn client_config(&self) -> ClientConfig {
        ClientConfig {
            base_url: self.base_url.clone().unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            path: self.path.clone(),
            pagination: self.pagination.clone(),
            page_size: self.page_size,
            rate_limit: self.rate_limit,
            retry: RetryPolicy {
                max_retries: self.max_retries,
                base_delay: Duration::from_millis(self.backoff_ms),
                ..RetryPolicy::default()
            },
            timeout: Duration::from_secs(self.timeout_secs.max(1)),
            api_key: std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty()),
            records_field: self.records_field.clone(),
            max_pages: self.max_pages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSection {
    /// Descriptions seen more than this many times are removed.
    pub template_threshold: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { template_threshold: DEFAULT_TEMPLATE_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSection {
    /// Fixed K; unset runs the elbow search over `k_min..=k_max`.
    pub k: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// L2-normalize rows before clustering.
    pub normalize: bool,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self { k: None, k_min: 2, k_max: 15, restarts: 10, max_iter: 300, tol: 1e-6, normalize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgramSection {
    pub n_min: usize,
    pub n_max: usize,
    /// Phrases listed per cluster in `top_phrases.json`.
    pub top: usize,
}

impl Default for NgramSection {
    fn default() -> Self {
        Self { n_min: 2, n_max: 5, top: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSection {
    pub canvas_width: f64,
    pub canvas_height: f64,
    pub max_phrases: usize,
    /// Width of the PNG raster; unset skips it.
    pub png_width: Option<u32>,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self { canvas_width: 800.0, canvas_height: 600.0, max_phrases: 60, png_width: Some(2400) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReviewSection {
    /// JSON-lines file of review edits.
    pub edits: Option<PathBuf>,
    pub approver: String,
}

impl Default for ReviewSection {
    fn default() -> Self {
        Self { edits: None, approver: "unassigned".into() }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// File (if any), then the environment for anything the file left unset.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_file(p),
            None => Ok(Self::default()),
        }
    }

    /// Called after flag overrides so that flags and file both win over env.
    pub fn fill_from_env(&mut self) {
        if self.crawl.base_url.is_none() {
            self.crawl.base_url = std::env::var(BASE_URL_ENV).ok().filter(|v| !v.is_empty());
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (what, path) in [
            ("crawl.snapshot", &self.crawl.snapshot),
            ("review.edits", &self.review.edits),
            ("discover.canned_response", &self.discover.canned_response),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    log::error!("{what} points at a missing file");
                    return Err(Error::MissingInput(p.clone()));
                }
            }
        }
        if self.preprocess.template_threshold < 1 {
            return bad("preprocess.template_threshold must be at least 1".into());
        }
        let c = &self.cluster;
        if let Some(k) = c.k {
            if k < 1 {
                return bad("cluster.k must be at least 1".into());
            }
        } else if c.k_min < 1 || c.k_min >= c.k_max {
            return bad(format!("cluster range [{}, {}] is empty", c.k_min, c.k_max));
        }
        if c.restarts < 1 {
            return bad("cluster.restarts must be at least 1".into());
        }
        if self.ngrams.n_min < 1 || self.ngrams.n_min > self.ngrams.n_max {
            return bad(format!("n-gram range [{}, {}] is invalid", self.ngrams.n_min, self.ngrams.n_max));
        }
        if self.render.canvas_width < 200.0 || self.render.canvas_height < 200.0 {
            return bad("render canvas must be at least 200x200".into());
        }
        if self.project.perplexity <= 0.0 || self.project.iterations == 0 {
            return bad("t-SNE needs a positive perplexity and iteration count".into());
        }
        if self.embed.dim == 0 {
            return bad("embed.dim must be positive".into());
        }
        Ok(())
    }
}
