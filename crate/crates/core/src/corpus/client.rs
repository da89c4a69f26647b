//! Read-only paginated crawler for the discovery endpoint.

use std::fmt;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use chrono::Utc;
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde_json::Value;

use super::pacer::TokenBucket;
use super::{incomplete_path, save_snapshot, CorpusSnapshot, SubmoltRecord};
use crate::error::{Error, Result};
use crate::registry::Registry;

pub const API_KEY_ENV: &str = "SILICO_API_KEY";
pub const BASE_URL_ENV: &str = "SILICO_BASE_URL";

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(20));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Clone)]
pub struct ClientConfig {
    pub base_url: String,
    pub path: String,
    /// Name of a registered pagination scheme (`page-number` or `cursor`).
    pub pagination: String,
    pub page_size: usize,
    /// Requests per second; zero or negative disables pacing.
    pub rate_limit: f64,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub api_key: Option<String>,
    /// JSON field holding the record array. Common alternatives are probed
    /// when it is absent.
    pub records_field: String,
    pub max_pages: Option<usize>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            path: "/api/v1/submolts".into(),
            pagination: "page-number".into(),
            page_size: 100,
            rate_limit: 2.0,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(30),
            api_key: None,
            records_field: "submolts".into(),
            max_pages: None,
        }
    }
}

impl ClientConfig {
    /// Applies `SILICO_BASE_URL` and `SILICO_API_KEY` when set.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.is_empty() {
                self.base_url = url;
            }
        }
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        self
    }

    pub fn endpoint(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.path.trim_start_matches('/')
        )
    }
}

impl fmt::Debug for ClientConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClientConfig")
            .field("base_url", &self.base_url)
            .field("path", &self.path)
            .field("pagination", &self.pagination)
            .field("page_size", &self.page_size)
            .field("rate_limit", &self.rate_limit)
            .field("retry", &self.retry)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PageCursor {
    Page(u64),
    Token(String),
}

/// How successive pages are requested and how the next one is discovered.
pub trait PaginationScheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn query(&self, cursor: Option<&PageCursor>, limit: usize) -> Vec<(String, String)>;
    fn next(
        &self,
        cursor: Option<&PageCursor>,
        body: &Value,
        received: usize,
        limit: usize,
    ) -> Option<PageCursor>;
}

/// `?page=N&limit=L`, 1-based. Follows `has_more`/`next_page` when the
/// server reports them, otherwise continues while pages come back full.
#[derive(Debug, Default)]
pub struct PageNumberPagination;

impl PaginationScheme for PageNumberPagination {
    fn name(&self) -> &'static str {
        "page-number"
    }

    fn query(&self, cursor: Option<&PageCursor>, limit: usize) -> Vec<(String, String)> {
        let page = match cursor {
            Some(PageCursor::Page(p)) => *p,
            _ => 1,
        };
        vec![("page".into(), page.to_string()), ("limit".into(), limit.to_string())]
    }

    fn next(
        &self,
        cursor: Option<&PageCursor>,
        body: &Value,
        received: usize,
        limit: usize,
    ) -> Option<PageCursor> {
        let current = match cursor {
            Some(PageCursor::Page(p)) => *p,
            _ => 1,
        };
        if let Some(next) = body.get("next_page").and_then(Value::as_u64) {
            return Some(PageCursor::Page(next));
        }
        let more = match body.get("has_more").and_then(Value::as_bool) {
            Some(flag) => flag,
            None => received > 0 && received >= limit,
        };
        more.then_some(PageCursor::Page(current + 1))
    }
}

/// `?cursor=C&limit=L`; the next cursor is read from `next_cursor`.
#[derive(Debug, Default)]
pub struct CursorPagination;

impl PaginationScheme for CursorPagination {
    fn name(&self) -> &'static str {
        "cursor"
    }

    fn query(&self, cursor: Option<&PageCursor>, limit: usize) -> Vec<(String, String)> {
        let mut q = Vec::with_capacity(2);
        match cursor {
            Some(PageCursor::Token(t)) => q.push(("cursor".into(), t.clone())),
            Some(PageCursor::Page(p)) => q.push(("cursor".into(), p.to_string())),
            None => {}
        }
        q.push(("limit".into(), limit.to_string()));
        q
    }

    fn next(
        &self,
        _cursor: Option<&PageCursor>,
        body: &Value,
        _received: usize,
        _limit: usize,
    ) -> Option<PageCursor> {
        match body.get("next_cursor") {
            Some(Value::String(s)) if !s.is_empty() => Some(PageCursor::Token(s.clone())),
            Some(Value::Number(n)) => Some(PageCursor::Token(n.to_string())),
            _ => None,
        }
    }
}

pub fn pagination_registry() -> Registry<Box<dyn PaginationScheme>, ()> {
    let mut reg = Registry::new("pagination scheme");
    reg.register("page-number", |_: &()| {
        Ok(Box::new(PageNumberPagination) as Box<dyn PaginationScheme>)
    });
    reg.register("cursor", |_: &()| Ok(Box::new(CursorPagination) as Box<dyn PaginationScheme>));
    reg
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub records: Vec<SubmoltRecord>,
    pub next: Option<PageCursor>,
    pub malformed: usize,
}

/// HTTP client that can only issue GET requests.
pub struct ReadOnlyClient {
    http: Client,
    config: ClientConfig,
    scheme: Box<dyn PaginationScheme>,
    pacer: Mutex<TokenBucket>,
}

impl ReadOnlyClient {
    pub fn new(config: ClientConfig) -> Result<Self> {
        if config.page_size == 0 {
            return Err(Error::Config("page size must be at least 1".into()));
        }
        let scheme = pagination_registry().build(&config.pagination, &())?;
        let http = Client::builder()
            .timeout(config.timeout)
            .user_agent(concat!("silico/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let pacer = Mutex::new(TokenBucket::new(config.rate_limit, 1.0));
        Ok(Self {
            http,
            config,
            scheme,
            pacer,
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn get(&self, url: &str, query: &[(String, String)]) -> Result<Response> {
        let mut attempt = 0;
        loop {
            self.pacer.lock().expect("pacer lock").acquire();
            let mut req = self.http.get(url).query(query);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let failure = match req.send() {
                Ok(resp) if resp.status().is_success() => return Ok(resp),
                Ok(resp) if resp.status() == StatusCode::TOO_MANY_REQUESTS => {
                    let hinted = resp
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<f64>().ok())
                        .filter(|s| s.is_finite() && *s >= 0.0)
                        .map(Duration::from_secs_f64);
                    (format!("HTTP 429 from {url}"), hinted)
                }
                Ok(resp) if resp.status().is_server_error() => {
                    (format!("HTTP {} from {url}", resp.status()), None)
                }
                Ok(resp) => {
                    return Err(Error::Transport(format!("HTTP {} from {url}", resp.status())))
                }
                Err(e) => (e.to_string(), None),
            };
            if attempt >= self.config.retry.max_retries {
                return Err(Error::Transport(format!(
                    "{} (gave up after {} retries)",
                    failure.0, attempt
                )));
            }
            let delay = failure.1.unwrap_or_else(|| self.config.retry.delay(attempt));
            log::warn!("{}; retrying in {:?}", failure.0, delay);
            std::thread::sleep(delay);
            attempt += 1;
        }
    }

    pub fn fetch_page(&self, cursor: Option<&PageCursor>) -> Result<Page> {
        let url = self.config.endpoint();
        let query = self.scheme.query(cursor, self.config.page_size);
        let resp = self.get(&url, &query)?;
        let body: Value = resp
            .json()
            .map_err(|e| Error::Transport(format!("undecodable page body from {url}: {e}")))?;
        let items = self.record_array(&body).ok_or_else(|| {
            Error::Transport(format!("page body from {url} carries no record array"))
        })?;
        let mut records = Vec::with_capacity(items.len());
        let mut malformed = 0;
        for item in items {
            match SubmoltRecord::from_wire(item) {
                Some(r) => records.push(r),
                None => {
                    log::warn!("skipping malformed record: {}", truncate(&item.to_string(), 120));
                    malformed += 1;
                }
            }
        }
        let next = self
            .scheme
            .next(cursor, &body, items.len(), self.config.page_size);
        Ok(Page {
            records,
            next,
            malformed,
        })
    }

    fn record_array<'a>(&self, body: &'a Value) -> Option<&'a Vec<Value>> {
        if let Some(arr) = body.as_array() {
            return Some(arr);
        }
        std::iter::once(self.config.records_field.as_str())
            .chain(["submolts", "data", "items", "results"])
            .find_map(|field| body.get(field).and_then(Value::as_array))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub fn fetch_page(client: &ReadOnlyClient, cursor: Option<&PageCursor>) -> Result<Page> {
    client.fetch_page(cursor)
}

/// A crawl that stopped early. `partial` holds everything fetched so far.
#[derive(Debug)]
pub struct CrawlFailure {
    pub partial: CorpusSnapshot,
    pub error: Error,
}

impl fmt::Display for CrawlFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "crawl interrupted after {} pages: {}",
            self.partial.pages_fetched, self.error
        )
    }
}

impl std::error::Error for CrawlFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Follows pagination to exhaustion.
pub fn crawl_all(config: &ClientConfig) -> std::result::Result<CorpusSnapshot, CrawlFailure> {
    let fail = |error, records: Vec<SubmoltRecord>, pages, malformed| {
        let mut partial = CorpusSnapshot::assemble(&config.base_url, records, pages, Utc::now());
        partial.malformed = malformed;
        CrawlFailure { partial, error }
    };
    let client = ReadOnlyClient::new(config.clone()).map_err(|e| fail(e, Vec::new(), 0, 0))?;
    let mut records = Vec::new();
    let mut pages = 0usize;
    let mut malformed = 0usize;
    let mut cursor: Option<PageCursor> = None;
    loop {
        if config.max_pages.is_some_and(|m| pages >= m) {
            log::warn!("stopping at configured page cap ({pages})");
            break;
        }
        match client.fetch_page(cursor.as_ref()) {
            Ok(page) => {
                pages += 1;
                malformed += page.malformed;
                log::debug!("page {pages}: {} records", page.records.len());
                records.extend(page.records);
                match page.next {
                    Some(next) if Some(&next) != cursor.as_ref() => cursor = Some(next),
                    Some(_) => {
                        return Err(fail(
                            Error::Transport("server repeated the same cursor".into()),
                            records,
                            pages,
                            malformed,
                        ))
                    }
                    None => break,
                }
            }
            Err(e) => return Err(fail(e, records, pages, malformed)),
        }
    }
    let mut snapshot = CorpusSnapshot::assemble(&config.base_url, records, pages, Utc::now());
    snapshot.malformed = malformed;
    if snapshot.collisions > 0 {
        log::warn!("{} duplicate ids collapsed", snapshot.collisions);
    }
    Ok(snapshot)
}

/// Crawls and persists. A failed crawl is written next to `path` under an
/// `.incomplete` name and the original error is returned; an existing
/// complete snapshot at `path` is never touched in that case.
pub fn crawl_to_file(config: &ClientConfig, path: &Path) -> Result<CorpusSnapshot> {
    match crawl_all(config) {
        Ok(snapshot) => {
            save_snapshot(&snapshot, path)?;
            Ok(snapshot)
        }
        Err(failure) => {
            let partial_path = incomplete_path(path);
            save_snapshot(&failure.partial, &partial_path)?;
            log::error!(
                "{failure}; partial snapshot written to {}",
                partial_path.display()
            );
            Err(failure.error)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn page_number_follows_has_more() {
        let s = PageNumberPagination;
        assert_eq!(s.query(None, 10)[0], ("page".to_string(), "1".to_string()));
        let cur = PageCursor::Page(2);
        assert_eq!(
            s.next(Some(&cur), &json!({"has_more": true}), 10, 10),
            Some(PageCursor::Page(3))
        );
        assert_eq!(s.next(Some(&cur), &json!({"has_more": false}), 10, 10), None);
        assert_eq!(s.next(None, &json!({}), 4, 10), None);
        assert_eq!(s.next(None, &json!({}), 10, 10), Some(PageCursor::Page(2)));
    }

    #[test]
    fn cursor_scheme_reads_next_cursor() {
        let s = CursorPagination;
        assert_eq!(s.query(None, 5), vec![("limit".to_string(), "5".to_string())]);
        assert_eq!(
            s.next(None, &json!({"next_cursor": "abc"}), 5, 5),
            Some(PageCursor::Token("abc".into()))
        );
        assert_eq!(s.next(None, &json!({"next_cursor": null}), 5, 5), None);
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let p = RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(350));
    }

    #[test]
    fn debug_never_prints_key() {
        let cfg = ClientConfig {
            api_key: Some("sekret-token".into()),
            ..Default::default()
        };
        let shown = format!("{cfg:?}");
        assert!(!shown.contains("sekret"));
        assert!(shown.contains("redacted"));
    }

    #[test]
    fn unknown_scheme_rejected() {
        let cfg = ClientConfig {
            pagination: "offset".into(),
            ..Default::default()
        };
        assert!(matches!(
            ReadOnlyClient::new(cfg),
            Err(Error::UnknownStrategy { .. })
        ));
    }
}
