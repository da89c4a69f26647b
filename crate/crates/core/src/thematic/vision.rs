//! Multimodal providers that turn the composed image plus prompt into a
//! free-text report.

use std::path::PathBuf;
use std::time::Duration;

use base64::Engine as _;
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::RetryPolicy;
use crate::error::{Error, Result};
use crate::registry::Registry;

pub struct VisionRequest<'a> {
    pub prompt: &'a str,
    pub k: usize,
    pub image: &'a [u8],
    pub media_type: &'a str,
    /// Highest-ranked phrases per cluster, used only by the offline stub.
    pub top_phrases: &'a [Vec<String>],
}

pub trait VisionProvider: Send + Sync {
    fn tag(&self) -> String;
    fn analyze(&self, request: &VisionRequest<'_>) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionConfig {
    pub kind: String,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// JSON pointer to the reply text in the provider response.
    pub response_pointer: String,
    /// Send this URL instead of inlining the image bytes.
    pub image_url: Option<String>,
    /// Stub only: return this file verbatim instead of the generated table.
    pub canned_response: Option<PathBuf>,
}

impl Default for VisionConfig {
    fn default() -> Self {
        Self {
            kind: "stub".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "SILICO_VLM_KEY".into(),
            timeout_secs: 180,
            max_retries: 3,
            backoff_ms: 1000,
            response_pointer: "/choices/0/message/content".into(),
            image_url: None,
            canned_response: None,
        }
    }
}

pub fn vision_registry() -> Registry<Box<dyn VisionProvider>, VisionConfig> {
    let mut reg = Registry::new("vision provider");
    reg.register("stub", |c: &VisionConfig| {
        let canned = match &c.canned_response {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?),
            None => None,
        };
        Ok(Box::new(StubVision { canned }) as Box<dyn VisionProvider>)
    });
    reg.register("http", |c: &VisionConfig| Ok(Box::new(HttpVision::new(c.clone())?) as Box<dyn VisionProvider>));
    reg
}

/// Offline stand-in: echoes the dominant phrases back in table form. It
/// makes no thematic judgement, so every category is left unclassified.
pub struct StubVision {
    pub canned: Option<String>,
}

impl VisionProvider for StubVision {
    fn tag(&self) -> String {
        if self.canned.is_some() { "stub/canned".into() } else { "stub/phrases".into() }
    }

    fn analyze(&self, request: &VisionRequest<'_>) -> Result<String> {
        if let Some(text) = &self.canned {
            return Ok(text.clone());
        }
        let mut out = String::from("| No. | Cluster | Theme | Sociological Insight | Category |\n|---|---|---|---|---|\n");
        for c in 0..request.k {
            let phrases = request.top_phrases.get(c).map(Vec::as_slice).unwrap_or(&[]);
            let label = phrases.first().cloned().unwrap_or_else(|| "(no phrases)".into());
            let summary = if phrases.is_empty() {
                "No recurring phrases".to_string()
            } else {
                format!("Recurring phrases: {}", phrases.iter().take(5).cloned().collect::<Vec<_>>().join(", "))
            };
            out.push_str(&format!(
                "| {c} | {label} | {summary} | Pending expert interpretation | Unclassified |\n"
            ));
        }
        Ok(out)
    }
}

pub struct HttpVision {
    config: VisionConfig,
    http: Client,
    api_key: Option<String>,
}

impl HttpVision {
    pub fn new(config: VisionConfig) -> Result<Self> {
        let http = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self { config, http, api_key })
    }

    fn body(&self, request: &VisionRequest<'_>) -> Value {
        let url = match &self.config.image_url {
            Some(url) => url.clone(),
            None => format!(
                "data:{};base64,{}",
                request.media_type,
                base64::engine::general_purpose::STANDARD.encode(request.image)
            ),
        };
        json!({
            "model": self.config.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt},
                    {"type": "image_url", "image_url": {"url": url}}
                ]
            }]
        })
    }
}

impl VisionProvider for HttpVision {
    fn tag(&self) -> String {
        format!("http/{}", self.config.model)
    }

    fn analyze(&self, request: &VisionRequest<'_>) -> Result<String> {
        let retry = RetryPolicy {
            max_retries: self.config.max_retries,
            base_delay: Duration::from_millis(self.config.backoff_ms),
            ..RetryPolicy::default()
        };
        let body = self.body(request);
        let mut attempt = 0;
        loop {
            let mut req = self.http.post(&self.config.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let failure = match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let value: Value = resp
                        .json()
                        .map_err(|e| Error::Provider(format!("undecodable vision response: {e}")))?;
                    return value
                        .pointer(&self.config.response_pointer)
                        .and_then(Value::as_str)
                        .map(str::to_owned)
                        .ok_or_else(|| {
                            Error::Provider(format!("no text at `{}` in vision response", self.config.response_pointer))
                        });
                }
                Ok(resp) if resp.status().as_u16() == 429 || resp.status().is_server_error() => {
                    format!("HTTP {}", resp.status())
                }
                Ok(resp) => return Err(Error::Provider(format!("vision endpoint answered HTTP {}", resp.status()))),
                Err(e) => e.to_string(),
            };
            if attempt >= retry.max_retries {
                return Err(Error::Provider(format!("vision request failed after {attempt} retries: {failure}")));
            }
            std::thread::sleep(retry.delay(attempt));
            attempt += 1;
        }
    }
}
