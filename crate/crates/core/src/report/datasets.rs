//! On-disk dataset formats.
//!
//! Every dataset is written twice: RFC-4180 CSV and line-delimited JSON.
//! Both start with a metadata header: the CSV variant with a `#` line
//! holding a JSON object, the JSONL variant with that object as its first
//! line. List-valued CSV columns hold compact JSON.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::issues::{IssueRecord, IssueSource};
use crate::lexicon::{IndicatorMatch, SourceKind};
use crate::repo::{CommitRecord, IssueRef, IssueRefKind};
use crate::tracker::CommentLifetime;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing metadata header")]
    MissingHeader,
    #[error("metadata header: {0}")]
    Header(String),
    #[error("dataset kind {found:?} where {expected:?} was expected")]
    WrongKind { expected: String, found: String },
    #[error("unsupported schema version {0}")]
    Version(u32),
    #[error("record {record}: {message}")]
    Record { record: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub schema: String,
    pub version: u32,
    pub config_sha256: String,
    pub lexicon_version: String,
}

impl ArtifactMeta {
    pub fn new(kind: &str, config_sha256: &str, lexicon_version: &str) -> Self {
        Self {
            schema: format!("secmine/{kind}"),
            version: SCHEMA_VERSION,
            config_sha256: config_sha256.to_string(),
            lexicon_version: lexicon_version.to_string(),
        }
    }

    fn check(&self, kind: &str) -> Result<(), DatasetError> {
        let expected = format!("secmine/{kind}");
        if self.schema != expected {
            return Err(DatasetError::WrongKind {
                expected,
                found: self.schema.clone(),
            });
        }
        if self.version != SCHEMA_VERSION {
            return Err(DatasetError::Version(self.version));
        }
        Ok(())
    }
}

/// A record type with a flat CSV layout.
pub trait Dataset: Sized + Serialize + DeserializeOwned {
    const KIND: &'static str;
    const COLUMNS: &'static [&'static str];

    fn to_row(&self) -> Vec<String>;
    fn from_row(row: &csv::StringRecord) -> Result<Self, String>;
}

pub fn write_csv<D: Dataset>(meta: &ArtifactMeta, items: &[D]) -> Vec<u8> {
    let mut out = Vec::new();
    out.push(b'#');
    out.extend(serde_json::to_vec(meta).expect("meta serializes"));
    out.push(b'\n');
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(&mut out);
        w.write_record(D::COLUMNS).expect("in-memory write");
        for item in items {
            w.write_record(item.to_row()).expect("in-memory write");
        }
        w.flush().expect("in-memory flush");
    }
    out
}

fn split_header(bytes: &[u8], marker: Option<u8>) -> Result<(ArtifactMeta, &[u8]), DatasetError> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or(DatasetError::MissingHeader)?;
    let mut line = &bytes[..nl];
    if let Some(m) = marker {
        line = line.strip_prefix(&[m]).ok_or(DatasetError::MissingHeader)?;
    }
    let meta: ArtifactMeta =
        serde_json::from_slice(line).map_err(|e| DatasetError::Header(e.to_string()))?;
    Ok((meta, &bytes[nl + 1..]))
}

pub fn read_csv<D: Dataset>(bytes: &[u8]) -> Result<(ArtifactMeta, Vec<D>), DatasetError> {
    let (meta, rest) = split_header(bytes, Some(b'#'))?;
    meta.check(D::KIND)?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest);
    let headers = r.headers()?.clone();
    if headers.iter().ne(D::COLUMNS.iter().copied()) {
        return Err(DatasetError::Header(format!(
            "columns {:?} do not match {:?}",
            headers.iter().collect::<Vec<_>>(),
            D::COLUMNS
        )));
    }
    let mut items = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        items.push(D::from_row(&rec).map_err(|message| DatasetError::Record { record: i + 1, message })?);
    }
    Ok((meta, items))
}

pub fn write_jsonl<D: Serialize>(meta: &ArtifactMeta, items: &[D]) -> Vec<u8> {
    let mut out = serde_json::to_vec(meta).expect("meta serializes");
    out.push(b'\n');
    for item in items {
        out.extend(serde_json::to_vec(item).expect("record serializes"));
        out.push(b'\n');
    }
    out
}

pub fn read_jsonl<D: DeserializeOwned>(
    bytes: &[u8],
    kind: &str,
) -> Result<(ArtifactMeta, Vec<D>), DatasetError> {
    let (meta, rest) = split_header(bytes, None)?;
    meta.check(kind)?;
    let mut items = Vec::new();
    for (i, line) in rest.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        items.push(serde_json::from_slice(line).map_err(|e| DatasetError::Record {
            record: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok((meta, items))
}

fn field(row: &csv::StringRecord, i: usize) -> Result<&str, String> {
    row.get(i).ok_or_else(|| format!("missing column {i}"))
}

fn parse_field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    field(row, i)?.parse().map_err(|e| format!("{name}: {e}"))
}

fn spans_json(matches: &[IndicatorMatch]) -> String {
    let spans: Vec<(&str, usize, usize)> = matches
        .iter()
        .map(|m| (m.phrase.as_str(), m.start, m.end))
        .collect();
    serde_json::to_string(&spans).expect("spans serialize")
}

fn spans_from_json(text: &str, kind: SourceKind, document_id: &str) -> Result<Vec<IndicatorMatch>, String> {
    let spans: Vec<(String, usize, usize)> =
        serde_json::from_str(text).map_err(|e| format!("matches: {e}"))?;
    Ok(spans
        .into_iter()
        .map(|(phrase, start, end)| IndicatorMatch {
            phrase,
            source_kind: kind,
            start,
            end,
            document_id: document_id.to_string(),
        })
        .collect())
}

fn optional<T: std::str::FromStr>(s: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|e| format!("{e}"))
    }
}

/// One mined commit with its message matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRow {
    pub commit: CommitRecord,
    pub matches: Vec<IndicatorMatch>,
}

impl CommitRow {
    pub fn has_indicator(&self) -> bool {
        !self.matches.is_empty()
    }

    pub fn has_issue_ref(&self) -> bool {
        !self.commit.issue_refs.is_empty()
    }
}

fn issue_ref_token(r: &IssueRef) -> String {
    match r.kind {
        IssueRefKind::Numeric => format!("#{}", r.value),
        IssueRefKind::ProjectKey => r.value.clone(),
    }
}

fn issue_ref_from_token(t: &str) -> IssueRef {
    match t.strip_prefix('#') {
        Some(n) => IssueRef::numeric(n),
        None => IssueRef::project_key(t),
    }
}

impl Dataset for CommitRow {
    const KIND: &'static str = "commits";
    const COLUMNS: &'static [&'static str] = &[
        "commit_id",
        "author_time",
        "has_indicator",
        "has_issue_ref",
        "issue_refs",
        "matches",
        "message",
    ];

    fn to_row(&self) -> Vec<String> {
        vec![
            self.commit.commit_id.clone(),
            self.commit.author_time.to_string(),
            self.has_indicator().to_string(),
            self.has_issue_ref().to_string(),
            self.commit
                .issue_refs
                .iter()
                .map(issue_ref_token)
                .collect::<Vec<_>>()
                .join(" "),
            spans_json(&self.matches),
            self.commit.message.clone(),
        ]
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self, String> {
        let commit_id = field(row, 0)?.to_string();
        let refs = field(row, 4)?;
        Ok(Self {
            matches: spans_from_json(field(row, 5)?, SourceKind::CommitMessage, &commit_id)?,
            commit: CommitRecord {
                author_time: parse_field(row, 1, "author_time")?,
                issue_refs: refs.split_whitespace().map(issue_ref_from_token).collect(),
                message: field(row, 6)?.to_string(),
                commit_id,
            },
        })
    }
}

impl Dataset for CommentLifetime {
    const KIND: &'static str = "comment_lifetimes";
    const COLUMNS: &'static [&'static str] = &[
        "key",
        "first_path",
        "first_line",
        "introduced_index",
        "introduced_tag",
        "removed_index",
        "removed_tag",
        "censored",
        "lifetime",
        "matches",
    ];

    fn to_row(&self) -> Vec<String> {
        vec![
            self.key.clone(),
            self.first_path.clone(),
            self.first_line.to_string(),
            self.introduced_index.to_string(),
            self.introduced_tag.clone(),
            self.removed_index.map(|i| i.to_string()).unwrap_or_default(),
            self.removed_tag.clone().unwrap_or_default(),
            self.censored.to_string(),
            self.lifetime.to_string(),
            spans_json(&self.matches),
        ]
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self, String> {
        let first_path = field(row, 1)?.to_string();
        let first_line: usize = parse_field(row, 2, "first_line")?;
        let introduced_tag = field(row, 4)?.to_string();
        let document_id = format!("{first_path}:{first_line}@{introduced_tag}");
        let removed_tag = field(row, 6)?;
        Ok(Self {
            key: field(row, 0)?.to_string(),
            introduced_index: parse_field(row, 3, "introduced_index")?,
            removed_index: optional(field(row, 5)?).map_err(|e| format!("removed_index: {e}"))?,
            removed_tag: (!removed_tag.is_empty()).then(|| removed_tag.to_string()),
            censored: parse_field(row, 7, "censored")?,
            lifetime: parse_field(row, 8, "lifetime")?,
            matches: spans_from_json(field(row, 9)?, SourceKind::Comment, &document_id)?,
            first_path,
            first_line,
            introduced_tag,
        })
    }
}

/// One fetched issue with its title/body matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRow {
    pub issue: IssueRecord,
    pub matches: Vec<IndicatorMatch>,
}

impl Dataset for IssueRow {
    const KIND: &'static str = "issues";
    const COLUMNS: &'static [&'static str] = &[
        "source",
        "external_id",
        "state",
        "created_at",
        "labels",
        "matches",
        "title",
        "body",
    ];

    fn to_row(&self) -> Vec<String> {
        vec![
            self.issue.source.to_string(),
            self.issue.external_id.clone(),
            self.issue.state.clone(),
            self.issue.created_at.to_string(),
            serde_json::to_string(&self.issue.labels).expect("labels serialize"),
            spans_json(&self.matches),
            self.issue.title.clone(),
            self.issue.body.clone(),
        ]
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self, String> {
        let source = match field(row, 0)? {
            "github" => IssueSource::Github,
            "jira" => IssueSource::Jira,
            other => return Err(format!("unknown issue source {other:?}")),
        };
        let issue = IssueRecord {
            source,
            external_id: field(row, 1)?.to_string(),
            state: field(row, 2)?.to_string(),
            created_at: parse_field(row, 3, "created_at")?,
            labels: serde_json::from_str(field(row, 4)?).map_err(|e| format!("labels: {e}"))?,
            title: field(row, 6)?.to_string(),
            body: field(row, 7)?.to_string(),
        };
        Ok(Self {
            matches: spans_from_json(field(row, 5)?, SourceKind::Issue, &issue.document_id())?,
            issue,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(kind: &str) -> ArtifactMeta {
        ArtifactMeta::new(kind, "abc", "1.0.0")
    }

    #[test]
    fn commit_rows_round_trip_with_awkward_text() {
        let row = CommitRow {
            commit: CommitRecord {
                commit_id: "deadbeef".into(),
                message: "Fix \"xss\", again\r\nsecond, line #2".into(),
                author_time: 42,
                issue_refs: vec![IssueRef::numeric("2"), IssueRef::project_key("GLPI-1")],
            },
            matches: vec![IndicatorMatch {
                phrase: "xss".into(),
                source_kind: SourceKind::CommitMessage,
                start: 5,
                end: 8,
                document_id: "deadbeef".into(),
            }],
        };
        let bytes = write_csv(&meta("commits"), std::slice::from_ref(&row));
        let (m, back) = read_csv::<CommitRow>(&bytes).unwrap();
        assert_eq!(m, meta("commits"));
        assert_eq!(back, std::slice::from_ref(&row));
        let (_, back) = read_jsonl::<CommitRow>(&write_jsonl(&meta("commits"), std::slice::from_ref(&row)), "commits").unwrap();
        assert_eq!(back, [row]);
    }

    #[test]
    fn kind_and_header_checks() {
        let bytes = write_csv::<CommitRow>(&meta("issues"), &[]);
        assert!(matches!(read_csv::<CommitRow>(&bytes), Err(DatasetError::WrongKind { .. })));
        assert!(matches!(read_csv::<CommitRow>(b"commit_id\n"), Err(DatasetError::MissingHeader)));
        assert!(matches!(read_csv::<CommitRow>(b"#{}\n"), Err(DatasetError::Header(_))));
    }
}
