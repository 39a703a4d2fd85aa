use base64::Engine;
use serde::Deserialize;
use serde_json::Value;

use super::transport::{HttpRequest, Transport};
use super::{parse_timestamp, send_with_retry, IssueError, IssueRecord, IssueSource, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JiraAuth {
    None,
    Basic { user: String, token: String },
    Bearer(String),
}

/// JIRA search (`/rest/api/2/search`) driven by an arbitrary JQL query.
pub struct JiraClient<T> {
    transport: T,
    endpoint: String,
    auth: JiraAuth,
    page_size: u32,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SearchPage {
    start_at: u64,
    total: u64,
    issues: Vec<RawIssue>,
}

#[derive(Deserialize)]
struct RawIssue {
    key: String,
    fields: RawFields,
}

#[derive(Deserialize)]
struct RawFields {
    #[serde(default)]
    summary: Option<String>,
    #[serde(default)]
    description: Option<Value>,
    #[serde(default)]
    status: Option<Value>,
    #[serde(default)]
    created: Option<String>,
    #[serde(default)]
    labels: Vec<String>,
}

impl<T: Transport> JiraClient<T> {
    pub fn new(transport: T, endpoint: impl Into<String>) -> Result<Self, IssueError> {
        let endpoint = endpoint.into().trim_end_matches('/').to_string();
        let parsed = url::Url::parse(&endpoint)
            .map_err(|_| IssueError::InvalidEndpoint(endpoint.clone()))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(IssueError::InvalidEndpoint(endpoint));
        }
        Ok(Self {
            transport,
            endpoint,
            auth: JiraAuth::None,
            page_size: 100,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_auth(mut self, auth: JiraAuth) -> Self {
        self.auth = auth;
        self
    }

    pub fn with_page_size(mut self, page_size: u32) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn search_url(&self, jql: &str, start_at: u64) -> String {
        let query = url::form_urlencoded::Serializer::new(String::new())
            .append_pair("jql", jql)
            .append_pair("startAt", &start_at.to_string())
            .append_pair("maxResults", &self.page_size.to_string())
            .append_pair("fields", "summary,description,status,created,labels")
            .finish();
        format!("{}/rest/api/2/search?{query}", self.endpoint)
    }

    /// One page starting at `start_at` (default 0). The returned offset is
    /// `None` once `total` issues have been served.
    pub fn fetch_page(
        &self,
        jql: &str,
        start_at: Option<u64>,
    ) -> Result<(Vec<IssueRecord>, Option<u64>), IssueError> {
        let start = start_at.unwrap_or(0);
        let url = self.search_url(jql, start);
        let mut req = HttpRequest::get(&url).header("Accept", "application/json");
        match &self.auth {
            JiraAuth::None => {}
            JiraAuth::Basic { user, token } => {
                let enc = base64::engine::general_purpose::STANDARD.encode(format!("{user}:{token}"));
                req = req.header("Authorization", format!("Basic {enc}"));
            }
            JiraAuth::Bearer(token) => {
                req = req.header("Authorization", format!("Bearer {token}"));
            }
        }
        let resp = send_with_retry(&self.transport, &req, &self.retry)?;
        if resp.status == 400 {
            let message = serde_json::from_str::<Value>(&resp.body)
                .ok()
                .and_then(|v| {
                    let msgs: Vec<String> = v
                        .get("errorMessages")?
                        .as_array()?
                        .iter()
                        .filter_map(|m| m.as_str().map(str::to_string))
                        .collect();
                    (!msgs.is_empty()).then(|| msgs.join("\n"))
                })
                .unwrap_or_else(|| resp.body.clone());
            return Err(IssueError::JqlSyntax {
                status: 400,
                endpoint: url,
                message,
            });
        }
        if !(200..300).contains(&resp.status) {
            return Err(IssueError::Status {
                status: resp.status,
                endpoint: url,
            });
        }
        let malformed = |message: String| IssueError::Malformed {
            status: resp.status,
            endpoint: url.clone(),
            message,
        };
        let page: SearchPage =
            serde_json::from_str(&resp.body).map_err(|e| malformed(e.to_string()))?;
        let served = page.issues.len() as u64;
        let mut records = Vec::with_capacity(page.issues.len());
        for issue in page.issues {
            let created = issue.fields.created.unwrap_or_default();
            let created_at = parse_timestamp(&created)
                .ok_or_else(|| malformed(format!("bad created {created:?} on {}", issue.key)))?;
            records.push(IssueRecord {
                source: IssueSource::Jira,
                title: issue.fields.summary.unwrap_or_default(),
                body: match issue.fields.description {
                    Some(Value::String(s)) => s,
                    Some(Value::Null) | None => String::new(),
                    Some(other) => other.to_string(),
                },
                state: issue
                    .fields
                    .status
                    .as_ref()
                    .and_then(|s| s.get("name"))
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
                created_at,
                labels: issue.fields.labels,
                external_id: issue.key,
            });
        }
        let next = page.start_at + served;
        Ok((records, (served > 0 && next < page.total).then_some(next)))
    }

    pub fn fetch_all(&self, jql: &str) -> Result<Vec<IssueRecord>, IssueError> {
        let mut all = Vec::new();
        let mut cursor = None;
        loop {
            let (page, next) = self.fetch_page(jql, cursor)?;
            all.extend(page);
            match next {
                Some(n) => cursor = Some(n),
                None => break,
            }
        }
        Ok(super::dedup_records(all))
    }
}
