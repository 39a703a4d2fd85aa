use serde::Deserialize;
use serde_json::Value;

use super::transport::{HttpRequest, Transport};
use super::{parse_timestamp, send_with_retry, IssueError, IssueRecord, IssueSource, RetryPolicy};

pub const GITHUB_API: &str = "https://api.github.com";

/// GitHub REST v3 issues listing. Pull requests returned by the endpoint are
/// dropped.
pub struct GithubClient<T> {
    transport: T,
    api_base: String,
    token: Option<String>,
    per_page: u32,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct RawIssue {
    number: u64,
    title: String,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    state: String,
    created_at: String,
    #[serde(default)]
    labels: Vec<Value>,
    #[serde(default)]
    pull_request: Option<Value>,
}

impl<T: Transport> GithubClient<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport,
            api_base: GITHUB_API.to_string(),
            token: None,
            per_page: 100,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_api_base(mut self, base: impl Into<String>) -> Self {
        self.api_base = base.into().trim_end_matches('/').to_string();
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_per_page(mut self, per_page: u32) -> Self {
        self.per_page = per_page.clamp(1, 100);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn issues_url(&self, slug: &str, page: u32) -> String {
        format!(
            "{}/repos/{slug}/issues?state=all&sort=created&direction=asc&per_page={}&page={page}",
            self.api_base, self.per_page
        )
    }

    /// One page of issues. `page` is the 1-based page cursor (`None` for the
    /// first page); the returned cursor is `None` after the last page.
    pub fn fetch_page(
        &self,
        slug: &str,
        page: Option<u32>,
    ) -> Result<(Vec<IssueRecord>, Option<u32>), IssueError> {
        validate_slug(slug)?;
        let page = page.unwrap_or(1).max(1);
        let url = self.issues_url(slug, page);
        let mut req = HttpRequest::get(&url)
            .header("Accept", "application/vnd.github+json")
            .header("X-GitHub-Api-Version", "2022-11-28");
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let resp = send_with_retry(&self.transport, &req, &self.retry)?;
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
        let raw: Vec<RawIssue> =
            serde_json::from_str(&resp.body).map_err(|e| malformed(e.to_string()))?;
        let raw_count = raw.len();
        let mut records = Vec::with_capacity(raw_count);
        for issue in raw {
            if issue.pull_request.is_some() {
                continue;
            }
            let created_at = parse_timestamp(&issue.created_at)
                .ok_or_else(|| malformed(format!("bad created_at {:?}", issue.created_at)))?;
            records.push(IssueRecord {
                source: IssueSource::Github,
                external_id: issue.number.to_string(),
                title: issue.title,
                body: issue.body.unwrap_or_default(),
                state: issue.state,
                created_at,
                labels: issue
                    .labels
                    .iter()
                    .filter_map(|l| match l {
                        Value::String(s) => Some(s.clone()),
                        Value::Object(o) => o.get("name")?.as_str().map(str::to_string),
                        _ => None,
                    })
                    .collect(),
            });
        }
        let has_next = match resp.header("link") {
            Some(link) => link.split(',').any(|part| part.contains("rel=\"next\"")),
            None => raw_count as u32 == self.per_page,
        };
        Ok((records, has_next.then_some(page + 1)))
    }

    pub fn fetch_all(&self, slug: &str) -> Result<Vec<IssueRecord>, IssueError> {
        let mut all = Vec::new();
        let mut cursor = None;
        loop {
            let (page, next) = self.fetch_page(slug, cursor)?;
            all.extend(page);
            match next {
                Some(n) => cursor = Some(n),
                None => break,
            }
        }
        Ok(super::dedup_records(all))
    }
}

fn validate_slug(slug: &str) -> Result<(), IssueError> {
    let ok_part = |p: &str| {
        !p.is_empty()
            && p != "."
            && p != ".."
            && p.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
    };
    match slug.split_once('/') {
        Some((owner, name)) if ok_part(owner) && ok_part(name) => Ok(()),
        _ => Err(IssueError::InvalidSlug(slug.to_string())),
    }
}
