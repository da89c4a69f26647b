use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tiny_http::{Header, Method, Response, Server};

use crate::corpus::SubmoltRecord;
use crate::error::{Error, Result};

pub const SHUTDOWN_PATH: &str = "/__admin/shutdown";
const LOG_PATH: &str = "/__admin/log";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestLogEntry {
    pub method: String,
    pub url: String,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub port: u16,
    pub path: String,
    pub default_limit: usize,
    /// Listing requests starting at or past this offset fail with HTTP 500.
    pub fail_from_offset: Option<usize>,
    /// The first N listing requests are answered with HTTP 429.
    pub throttle_first: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            port: 0,
            path: "/api/v1/submolts".into(),
            default_limit: 100,
            fail_from_offset: None,
            throttle_first: 0,
        }
    }
}

/// Handle to a running fixture service; shuts down on drop.
pub struct FixtureServer {
    addr: SocketAddr,
    server: Arc<Server>,
    log: Arc<Mutex<Vec<RequestLogEntry>>>,
    thread: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_log(&self) -> Vec<RequestLogEntry> {
        self.log.lock().expect("log lock").clone()
    }

    /// Blocks until the service is stopped (e.g. through the shutdown path).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn wire(record: &SubmoltRecord) -> Value {
    let mut v = serde_json::to_value(record).expect("records serialize");
    if record.description.is_empty() {
        // exercise the null-description path of the decoder
        v["description"] = Value::Null;
    }
    v
}

pub fn serve(records: &[SubmoltRecord], options: ServeOptions) -> Result<FixtureServer> {
    serve_raw(records.iter().map(wire).collect(), options)
}

/// Serves arbitrary JSON items, including ones the crawler should reject.
pub fn serve_raw(items: Vec<Value>, options: ServeOptions) -> Result<FixtureServer> {
    let server = Server::http(("127.0.0.1", options.port))
        .map_err(|e| Error::Transport(format!("fixture bind failed on port {}: {e}", options.port)))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Transport("fixture server has no ip address".into()))?;
    let server = Arc::new(server);
    let log = Arc::new(Mutex::new(Vec::new()));
    let thread = {
        let server = Arc::clone(&server);
        let log = Arc::clone(&log);
        let items = Arc::new(items);
        let listing_calls = AtomicUsize::new(0);
        std::thread::spawn(move || {
            for request in server.incoming_requests() {
                let method = request.method().to_string();
                let url = request.url().to_string();
                log.lock().expect("log lock").push(RequestLogEntry {
                    method: method.clone(),
                    url: url.clone(),
                });
                let (path, query) = split_query(&url);
                let reply = if *request.method() != Method::Get {
                    text(405, "read-only fixture")
                } else if path == SHUTDOWN_PATH {
                    let _ = request.respond(text(200, "bye"));
                    break;
                } else if path == LOG_PATH {
                    let body = serde_json::to_string(&*log.lock().expect("log lock")).unwrap();
                    json_response(200, body)
                } else if path == options.path.trim_end_matches('/') {
                    let call = listing_calls.fetch_add(1, Ordering::SeqCst);
                    if call < options.throttle_first {
                        text(429, "slow down").with_header(
                            Header::from_bytes("Retry-After", "0").expect("static header"),
                        )
                    } else {
                        listing(&items, &query, &options)
                    }
                } else {
                    text(404, "not found")
                };
                let _ = request.respond(reply);
            }
        })
    };
    Ok(FixtureServer {
        addr,
        server,
        log,
        thread: Some(thread),
    })
}

type Reply = Response<std::io::Cursor<Vec<u8>>>;

fn text(status: u16, body: &str) -> Reply {
    Response::from_string(body).with_status_code(status)
}

fn json_response(status: u16, body: String) -> Reply {
    Response::from_string(body)
        .with_status_code(status)
        .with_header(Header::from_bytes("Content-Type", "application/json").expect("static header"))
}

fn split_query(url: &str) -> (&str, HashMap<String, String>) {
    let (path, query) = url.split_once('?').unwrap_or((url, ""));
    let params = query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    (path.trim_end_matches('/'), params)
}

fn listing(items: &[Value], query: &HashMap<String, String>, options: &ServeOptions) -> Reply {
    let limit = match query.get("limit").map(|l| l.parse::<usize>()) {
        None => options.default_limit,
        Some(Ok(l)) if (1..=1000).contains(&l) => l,
        _ => return text(400, "bad limit"),
    };
    let offset = if let Some(cursor) = query.get("cursor") {
        match cursor.parse::<usize>() {
            Ok(o) => o,
            Err(_) => return text(400, "bad cursor"),
        }
    } else {
        match query.get("page").map(|p| p.parse::<usize>()) {
            None => 0,
            Some(Ok(p)) if p >= 1 => (p - 1).saturating_mul(limit),
            _ => return text(400, "bad page"),
        }
    };
    if options.fail_from_offset.is_some_and(|f| offset >= f) {
        return text(500, "injected failure");
    }
    let start = offset.min(items.len());
    let end = offset.saturating_add(limit).min(items.len());
    let has_more = end < items.len();
    let body = json!({
        "submolts": &items[start..end],
        "page": offset / limit + 1,
        "limit": limit,
        "total": items.len(),
        "has_more": has_more,
        "next_cursor": if has_more { Value::from(end.to_string()) } else { Value::Null },
    });
    json_response(200, body.to_string())
}
