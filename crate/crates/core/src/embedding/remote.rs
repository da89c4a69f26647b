//! HTTP embedding backend: `POST {model, input: [texts]}` and read one
//! vector per input back, in order. Field names are configurable so the
//! same client fits several provider APIs.

use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{Map, Value};

use super::{EmbeddingProvider, ProviderConfig};
use crate::error::{Error, Result};

pub struct RemoteEmbedder {
    config: ProviderConfig,
    http: Client,
    api_key: Option<String>,
}

impl RemoteEmbedder {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("embedding batch size must be at least 1".into()));
        }
        if config.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let http = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self {
            config,
            http,
            api_key,
        })
    }

    fn request_body(&self, texts: &[String]) -> Value {
        let mut body = Map::new();
        body.insert(self.config.model_field.clone(), Value::from(self.config.model.clone()));
        body.insert(self.config.input_field.clone(), Value::from(texts.to_vec()));
        Value::Object(body)
    }

    fn decode(&self, body: &Value, expected: usize) -> Result<Vec<Vec<f32>>> {
        let items = body
            .pointer(&self.config.response_pointer)
            .and_then(Value::as_array)
            .ok_or_else(|| {
                Error::Provider(format!(
                    "response has no array at `{}`",
                    self.config.response_pointer
                ))
            })?;
        if items.len() != expected {
            return Err(Error::Provider(format!(
                "response carries {} vectors for {} inputs",
                items.len(),
                expected
            )));
        }
        items
            .iter()
            .map(|item| {
                let vector = if self.config.vector_field.is_empty() {
                    item
                } else {
                    item.get(&self.config.vector_field).unwrap_or(&Value::Null)
                };
                vector
                    .as_array()
                    .ok_or_else(|| Error::Provider("response item is not a vector".into()))?
                    .iter()
                    .map(|x| {
                        x.as_f64()
                            .map(|v| v as f32)
                            .ok_or_else(|| Error::Provider("non-numeric vector entry".into()))
                    })
                    .collect()
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn tag(&self) -> String {
        format!("remote/{}/d{}", self.config.model, self.config.dim)
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn batch_size(&self) -> usize {
        self.config.batch_size
    }

    fn concurrency(&self) -> usize {
        self.config.concurrency.max(1)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let retry = self.config.retry();
        let body = self.request_body(texts);
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
                        .map_err(|e| Error::Provider(format!("undecodable response: {e}")))?;
                    return self.decode(&value, texts.len());
                }
                Ok(resp) if resp.status().as_u16() == 429 || resp.status().is_server_error() => {
                    format!("HTTP {}", resp.status())
                }
                Ok(resp) => {
                    return Err(Error::Provider(format!(
                        "embedding endpoint answered HTTP {}",
                        resp.status()
                    )))
                }
                Err(e) => e.to_string(),
            };
            if attempt >= retry.max_retries {
                return Err(Error::Provider(format!(
                    "embedding request failed after {attempt} retries: {failure}"
                )));
            }
            std::thread::sleep(retry.delay(attempt));
            attempt += 1;
        }
    }
}
