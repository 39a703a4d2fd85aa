//! HTTP transport used by the tracker clients, with a record/replay layer so
//! mining can run offline.
//!
//! Replay files are line-delimited JSON, one [`ExchangeRecord`] per line.
//! Request headers are never recorded, so credentials do not leak into
//! fixtures.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::IssueError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: "GET".into(),
            url: url.into(),
            headers: Vec::new(),
        }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_string(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HttpResponse {
    pub status: u16,
    /// Lowercased header names.
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(&name.to_ascii_lowercase()).map(String::as_str)
    }
}

pub trait Transport {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IssueError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IssueError> {
        (**self).execute(request)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IssueError> {
        (**self).execute(request)
    }
}

/// Real network access.
pub struct LiveTransport {
    client: reqwest::blocking::Client,
}

impl LiveTransport {
    pub fn new() -> Result<Self, IssueError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .user_agent(concat!("secmine/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| IssueError::Transport {
                endpoint: String::new(),
                message: e.to_string(),
            })?;
        Ok(Self { client })
    }
}

impl Transport for LiveTransport {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IssueError> {
        let method = reqwest::Method::from_bytes(request.method.as_bytes()).map_err(|e| {
            IssueError::Transport {
                endpoint: request.url.clone(),
                message: e.to_string(),
            }
        })?;
        let mut builder = self.client.request(method, &request.url);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let resp = builder.send().map_err(|e| IssueError::Transport {
            endpoint: request.url.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_ascii_lowercase(), v.to_str().ok()?.to_string())))
            .collect();
        let body = resp.text().map_err(|e| IssueError::Transport {
            endpoint: request.url.clone(),
            message: e.to_string(),
        })?;
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub method: String,
    pub url: String,
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

/// Serves recorded responses keyed by method and URL. Repeated requests for
/// the same key consume the recorded responses in order and then keep
/// returning the last one. Never touches the network.
pub struct ReplayTransport {
    responses: Mutex<HashMap<(String, String), VecDeque<HttpResponse>>>,
}

impl ReplayTransport {
    pub fn from_records(records: impl IntoIterator<Item = ExchangeRecord>) -> Self {
        let mut responses: HashMap<(String, String), VecDeque<HttpResponse>> = HashMap::new();
        for r in records {
            responses
                .entry((r.method.to_ascii_uppercase(), r.url))
                .or_default()
                .push_back(HttpResponse {
                    status: r.status,
                    headers: r
                        .headers
                        .into_iter()
                        .map(|(k, v)| (k.to_ascii_lowercase(), v))
                        .collect(),
                    body: r.body,
                });
        }
        Self {
            responses: Mutex::new(responses),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IssueError> {
        let path = path.as_ref();
        let fixture_err = |message: String| IssueError::Fixture {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|e| fixture_err(e.to_string()))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| fixture_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ExchangeRecord = serde_json::from_str(&line)
                .map_err(|e| fixture_err(format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self::from_records(records))
    }
}

impl Transport for ReplayTransport {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IssueError> {
        let mut map = self.responses.lock().expect("replay lock poisoned");
        let key = (request.method.to_ascii_uppercase(), request.url.clone());
        let queue = map.get_mut(&key).ok_or_else(|| IssueError::ReplayMiss {
            method: request.method.clone(),
            url: request.url.clone(),
        })?;
        if queue.len() > 1 {
            Ok(queue.pop_front().expect("non-empty"))
        } else {
            Ok(queue.front().cloned().expect("recorded responses are never empty"))
        }
    }
}

/// Passes requests to an inner transport and appends every exchange to a
/// replay file.
pub struct RecordingTransport<T> {
    inner: T,
    path: PathBuf,
    out: Mutex<File>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, path: impl Into<PathBuf>) -> Result<Self, IssueError> {
        let path = path.into();
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| IssueError::Fixture {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(Self {
            inner,
            path,
            out: Mutex::new(out),
        })
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IssueError> {
        let resp = self.inner.execute(request)?;
        let rec = ExchangeRecord {
            method: request.method.clone(),
            url: request.url.clone(),
            status: resp.status,
            headers: resp.headers.clone(),
            body: resp.body.clone(),
        };
        let mut line = serde_json::to_string(&rec).expect("record serializes");
        line.push('\n');
        let mut out = self.out.lock().expect("recording lock poisoned");
        out.write_all(line.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| IssueError::Fixture {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        Ok(resp)
    }
}
