//! Issue tracker clients (GitHub REST, JIRA search) normalized into one
//! record shape.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{IndicatorMatch, Lexicon, SourceKind};

mod github;
mod jira;
pub mod transport;

pub use github::GithubClient;
pub use jira::{JiraAuth, JiraClient};
pub use transport::{
    ExchangeRecord, HttpRequest, HttpResponse, LiveTransport, RecordingTransport, ReplayTransport,
    Transport,
};

#[derive(Debug, Error)]
pub enum IssueError {
    #[error("authentication failed ({status}) at {endpoint}")]
    Authentication { status: u16, endpoint: String },
    #[error("rate limit still exceeded after {attempts} attempts ({status}) at {endpoint}")]
    RateLimited {
        status: u16,
        endpoint: String,
        attempts: u32,
    },
    #[error("malformed response ({status}) from {endpoint}: {message}")]
    Malformed {
        status: u16,
        endpoint: String,
        message: String,
    },
    #[error("JQL error ({status}) at {endpoint}: {message}")]
    JqlSyntax {
        status: u16,
        endpoint: String,
        message: String,
    },
    #[error("unexpected status {status} from {endpoint}")]
    Status { status: u16, endpoint: String },
    #[error("request to {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("no recorded response for {method} {url}")]
    ReplayMiss { method: String, url: String },
    #[error("replay fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("invalid repository slug {0:?}, expected owner/name")]
    InvalidSlug(String),
    #[error("invalid endpoint {0:?}")]
    InvalidEndpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueSource {
    Github,
    Jira,
}

impl fmt::Display for IssueSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IssueSource::Github => "github",
            IssueSource::Jira => "jira",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub source: IssueSource,
    pub external_id: String,
    pub title: String,
    pub body: String,
    pub state: String,
    /// UTC seconds.
    pub created_at: i64,
    pub labels: Vec<String>,
}

impl IssueRecord {
    /// `source:external_id`, unique within one fetch.
    pub fn document_id(&self) -> String {
        format!("{}:{}", self.source, self.external_id)
    }

    /// Text the lexicon is matched against.
    pub fn match_text(&self) -> String {
        format!("{}\n\n{}", self.title, self.body)
    }
}

/// Exponential backoff for rate-limit responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay: Duration::from_secs(2),
            max_delay: Duration::from_secs(120),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    fn delay(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let backoff = self
            .base_delay
            .checked_mul(1u32.checked_shl(attempt).unwrap_or(u32::MAX))
            .unwrap_or(self.max_delay);
        retry_after.unwrap_or(backoff).min(self.max_delay)
    }
}

fn is_rate_limited(resp: &HttpResponse) -> bool {
    resp.status == 429
        || (resp.status == 403
            && (resp.header("x-ratelimit-remaining") == Some("0")
                || resp.header("retry-after").is_some()))
}

/// Sends `request`, sleeping and retrying while the server reports a rate
/// limit. Authentication failures are mapped here; other statuses are left
/// to the caller.
pub(crate) fn send_with_retry<T: Transport>(
    transport: &T,
    request: &HttpRequest,
    policy: &RetryPolicy,
) -> Result<HttpResponse, IssueError> {
    let mut attempt = 0;
    loop {
        let resp = transport.execute(request)?;
        if is_rate_limited(&resp) {
            if attempt >= policy.max_retries {
                return Err(IssueError::RateLimited {
                    status: resp.status,
                    endpoint: request.url.clone(),
                    attempts: attempt + 1,
                });
            }
            let retry_after = resp
                .header("retry-after")
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let wait = policy.delay(attempt, retry_after);
            tracing::warn!(endpoint = %request.url, ?wait, "rate limited, backing off");
            std::thread::sleep(wait);
            attempt += 1;
            continue;
        }
        if resp.status == 401 || resp.status == 403 {
            return Err(IssueError::Authentication {
                status: resp.status,
                endpoint: request.url.clone(),
            });
        }
        return Ok(resp);
    }
}

/// Drops later duplicates of the same `(source, external_id)`.
pub fn dedup_records(records: Vec<IssueRecord>) -> Vec<IssueRecord> {
    let mut seen = HashSet::new();
    records
        .into_iter()
        .filter(|r| seen.insert((r.source, r.external_id.clone())))
        .collect()
}

/// Matches title and body (joined by a blank line) of every issue. Keyed by
/// [`IssueRecord::document_id`]; issues without matches map to an empty
/// list.
pub fn match_issues(lexicon: &Lexicon, issues: &[IssueRecord]) -> BTreeMap<String, Vec<IndicatorMatch>> {
    issues
        .iter()
        .map(|issue| {
            let id = issue.document_id();
            let matches = lexicon.match_text(&issue.match_text(), SourceKind::Issue, &id);
            (id, matches)
        })
        .collect()
}

pub(crate) fn parse_timestamp(value: &str) -> Option<i64> {
    chrono::DateTime::parse_from_rfc3339(value)
        .or_else(|_| chrono::DateTime::parse_from_str(value, "%Y-%m-%dT%H:%M:%S%.f%z"))
        .ok()
        .map(|t| t.timestamp())
}
