//! End-to-end mining run: repository history, comment lifetimes, issues,
//! sample draw and artifact emission.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use git2::Oid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::config::{Config, GithubConfig, JiraConfig};
use super::datasets::{self, ArtifactMeta, CommitRow, IssueRow};
use super::{count_lines_of_code, render_survival_figure_data, summary_stats, SummaryReport};
use crate::comments::{extract_comments, normalize_comment, ExtensionMap, NormalizedComment};
use crate::issues::GithubClient;
use crate::issues::{JiraAuth, JiraClient};
use crate::issues::transport::{LiveTransport, RecordingTransport, ReplayTransport, Transport};
use crate::issues::{dedup_records, IssueError, IssueRecord};
use crate::lexicon::{cooccurring_pairs, IndicatorMatch, Lexicon, SourceKind};
use crate::repo::{ReleaseTag, RepoError, RepoMiner, SkippedTag};
use crate::sampler::{draw_sample, SampleSpec, SampleTask};
use crate::tracker::{build_timeline, survival_table, CommentLifetime, TagSnapshot};

/// Lines of context around a sampled comment.
const CONTEXT_LINES: usize = 3;

pub const COMMITS_CSV: &str = "commits.csv";
pub const COMMITS_JSONL: &str = "commits.jsonl";
pub const LIFETIMES_CSV: &str = "comment_lifetimes.csv";
pub const LIFETIMES_JSONL: &str = "comment_lifetimes.jsonl";
pub const ISSUES_CSV: &str = "issues.csv";
pub const ISSUES_JSONL: &str = "issues.jsonl";
pub const SURVIVAL_CSV: &str = "survival.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CANDIDATES_JSONL: &str = "candidates.jsonl";
pub const SAMPLE_JSONL: &str = "sample_tasks.jsonl";

pub const ARTIFACTS: [&str; 10] = [
    COMMITS_CSV,
    COMMITS_JSONL,
    LIFETIMES_CSV,
    LIFETIMES_JSONL,
    ISSUES_CSV,
    ISSUES_JSONL,
    SURVIVAL_CSV,
    SUMMARY_JSON,
    CANDIDATES_JSONL,
    SAMPLE_JSONL,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Repository,
    Comments,
    Issues,
    Sample,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Repository => "repository",
            Stage::Comments => "comments",
            Stage::Issues => "issues",
            Stage::Sample => "sample",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    fn new(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        Self {
            stage,
            source: source.into(),
        }
    }
}

fn at<E>(stage: Stage) -> impl FnOnce(E) -> PipelineError
where
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    move |e| PipelineError::new(stage, e)
}

/// Everything a run computes, before serialization.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub tags: Vec<ReleaseTag>,
    pub skipped_tags: Vec<SkippedTag>,
    pub commits: Vec<CommitRow>,
    pub lifetimes: Vec<CommentLifetime>,
    pub issues: Vec<IssueRow>,
    pub lines_of_code: u64,
    pub summary: SummaryReport,
    pub candidates: Vec<SampleTask>,
    pub sample: Vec<SampleTask>,
}

/// Loads the config and runs every stage, writing artifacts to the
/// configured output directory. Returns that directory.
pub fn run_pipeline(config_path: &Path) -> Result<PathBuf, PipelineError> {
    let config = Config::load(config_path).map_err(at(Stage::Config))?;
    run_with_config(&config, None)
}

/// Like [`run_pipeline`] with an already loaded config and an optional
/// output override.
pub fn run_with_config(config: &Config, out_dir: Option<&Path>) -> Result<PathBuf, PipelineError> {
    let out = out_dir.unwrap_or(&config.output).to_path_buf();
    let output = mine(config)?;
    let files = render_artifacts(config, &output, &chrono::Utc::now().to_rfc3339());
    write_atomically(&out, &files).map_err(at(Stage::Write))?;
    Ok(out)
}

/// Runs the mining stages without touching the output directory.
pub fn mine(config: &Config) -> Result<RunOutput, PipelineError> {
    if !config.repository.exists() {
        return Err(PipelineError::new(
            Stage::Repository,
            format!("repository path {} does not exist", config.repository.display()),
        ));
    }
    std::thread::scope(|scope| {
        let issues = scope.spawn(|| fetch_issues(config));
        let repo = mine_repository(config);
        let issues = issues.join().expect("issue stage panicked");
        let (tags, skipped_tags, commits, lifetimes, contexts, lines_of_code) = repo?;
        let issues = issues?;

        let summary = summary_stats(&config.project, &commits, &tags, &lifetimes, &issues, lines_of_code);
        let candidates = build_candidates(config, &commits, &lifetimes, &contexts, &issues);
        let sample = draw_sample(&stratify(&candidates), &config.sampling).map_err(at(Stage::Sample))?;
        tracing::info!(
            commits = commits.len(),
            lifetimes = lifetimes.len(),
            issues = issues.len(),
            candidates = candidates.len(),
            sampled = sample.len(),
            "mining finished"
        );
        Ok(RunOutput {
            tags,
            skipped_tags,
            commits,
            lifetimes,
            issues,
            lines_of_code,
            summary,
            candidates,
            sample,
        })
    })
}

type RepoStage = (
    Vec<ReleaseTag>,
    Vec<SkippedTag>,
    Vec<CommitRow>,
    Vec<CommentLifetime>,
    HashMap<String, CommentContext>,
    u64,
);

fn mine_repository(config: &Config) -> Result<RepoStage, PipelineError> {
    let miner = RepoMiner::open(&config.repository).map_err(at(Stage::Repository))?;
    let (tags, skipped) = miner.scan_release_tags().map_err(at(Stage::Repository))?;
    for s in &skipped {
        tracing::warn!(tag = %s.name, reason = %s.reason, "skipped tag");
    }
    let commits: Vec<CommitRow> = miner
        .list_commits()
        .map_err(at(Stage::Repository))?
        .into_iter()
        .map(|commit| CommitRow {
            matches: config
                .lexicon
                .match_text(&commit.message, SourceKind::CommitMessage, &commit.commit_id),
            commit,
        })
        .collect();

    let (lifetimes, contexts, loc) = mine_comments(&miner, &tags, &config.lexicon, &config.extensions)
        .map_err(at(Stage::Comments))?;
    Ok((tags, skipped, commits, lifetimes, contexts, loc))
}

/// Matched comments of one blob, with the path they were first seen at.
#[derive(Clone)]
struct BlobComments {
    path: String,
    comments: Vec<NormalizedComment>,
}

/// Source lines around a comment, with the comment's byte range in them.
#[derive(Debug, Clone)]
struct CommentContext {
    excerpt: String,
    comment_start: usize,
    comment_end: usize,
}

fn matched_comments(path: &str, content: &[u8], lexicon: &Lexicon, extensions: &ExtensionMap) -> Vec<NormalizedComment> {
    let Some(profile) = extensions.detect(path) else {
        return Vec::new();
    };
    if crate::bot::is_binary(content) {
        return Vec::new();
    }
    let text = String::from_utf8_lossy(content);
    extract_comments(&text, profile, path)
        .into_iter()
        .map(normalize_comment)
        .filter(|c| !lexicon.match_text(&c.key, SourceKind::Comment, "").is_empty())
        .collect()
}

fn context_for(content: &[u8], comment: &NormalizedComment) -> Option<CommentContext> {
    let text = String::from_utf8_lossy(content);
    let line_starts: Vec<usize> = std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1))
        .collect();
    let first = comment.origin.start_line.saturating_sub(1 + CONTEXT_LINES);
    let last = (comment.origin.end_line + CONTEXT_LINES).min(line_starts.len());
    let from = line_starts[first];
    let to = line_starts.get(last).copied().unwrap_or(text.len());
    let excerpt = text[from..to].to_string();
    let line_offset = line_starts[comment.origin.start_line - 1] - from;
    let start = line_offset + excerpt[line_offset..].find(&comment.origin.text)?;
    Some(CommentContext {
        comment_start: start,
        comment_end: start + comment.origin.text.len(),
        excerpt,
    })
}

type CommentStage = (Vec<CommentLifetime>, HashMap<String, CommentContext>, u64);

fn mine_comments(
    miner: &RepoMiner,
    tags: &[ReleaseTag],
    lexicon: &Lexicon,
    extensions: &ExtensionMap,
) -> Result<CommentStage, RepoError> {
    let repo = miner.repository();
    let mut cache: HashMap<Oid, BlobComments> = HashMap::new();
    let mut snapshots = Vec::with_capacity(tags.len());
    let mut loc = 0;
    for (i, tag) in tags.iter().enumerate() {
        let entries = miner.tree_paths(&tag.commit_id, |p| extensions.accepts(p))?;
        let newest = i + 1 == tags.len();
        let mut fresh = Vec::new();
        for (path, oid) in &entries {
            if newest || !cache.contains_key(oid) {
                let blob = repo.find_blob(*oid).map_err(|e| RepoError::UnreadableObject {
                    path: path.clone(),
                    message: e.message().to_string(),
                })?;
                fresh.push((path.clone(), *oid, blob.content().to_vec()));
            }
        }
        if newest {
            loc = count_lines_of_code(
                fresh
                    .iter()
                    .filter(|(_, _, c)| !crate::bot::is_binary(c))
                    .map(|(_, _, c)| c.as_slice()),
            );
        }
        fresh.retain(|(_, oid, _)| !cache.contains_key(oid));
        let extracted: Vec<(Oid, BlobComments)> = fresh
            .par_iter()
            .map(|(path, oid, content)| {
                (
                    *oid,
                    BlobComments {
                        path: path.clone(),
                        comments: matched_comments(path, content, lexicon, extensions),
                    },
                )
            })
            .collect();
        for (oid, bc) in extracted {
            cache.entry(oid).or_insert(bc);
        }
        let mut comments = Vec::new();
        for (path, oid) in &entries {
            let bc = &cache[oid];
            comments.extend(bc.comments.iter().map(|c| {
                let mut c = c.clone();
                if bc.path != *path {
                    c.origin.file_path = path.clone();
                }
                c
            }));
        }
        snapshots.push(TagSnapshot {
            tag: tag.clone(),
            comments,
        });
    }
    if snapshots.is_empty() {
        return Ok((Vec::new(), HashMap::new(), 0));
    }
    let lifetimes = build_timeline(&snapshots, lexicon).expect("tags are ordered and non-empty");

    let mut contexts = HashMap::new();
    for l in &lifetimes {
        let tag = &tags
            .iter()
            .find(|t| t.order_index == l.introduced_index)
            .expect("lifetime tag exists");
        let Some(content) = miner.read_file(&tag.commit_id, &l.first_path)? else {
            continue;
        };
        let comment = matched_comments(&l.first_path, &content, lexicon, extensions)
            .into_iter()
            .find(|c| c.key == l.key && c.origin.start_line == l.first_line);
        if let Some(ctx) = comment.and_then(|c| context_for(&content, &c)) {
            contexts.insert(lifetime_document_id(l), ctx);
        }
    }
    Ok((lifetimes, contexts, loc))
}

fn lifetime_document_id(l: &CommentLifetime) -> String {
    format!("{}:{}@{}", l.first_path, l.first_line, l.introduced_tag)
}

fn env_value(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn transport_for(replay: Option<&Path>, record: Option<&Path>) -> Result<Box<dyn Transport>, IssueError> {
    if let Some(replay) = replay {
        return Ok(Box::new(ReplayTransport::load(replay)?));
    }
    let live = LiveTransport::new()?;
    Ok(match record {
        Some(path) => Box::new(RecordingTransport::new(live, path)?),
        None => Box::new(live),
    })
}

fn fetch_github(cfg: &GithubConfig) -> Result<Vec<IssueRecord>, IssueError> {
    let transport = transport_for(cfg.replay.as_deref(), cfg.record.as_deref())?;
    let mut client = GithubClient::new(transport).with_per_page(cfg.per_page);
    if let Some(base) = &cfg.api_base {
        client = client.with_api_base(base.clone());
    }
    if cfg.replay.is_none() {
        client = client.with_token(env_value(&cfg.token_env));
    }
    client.fetch_all(&cfg.slug)
}

fn fetch_jira(cfg: &JiraConfig) -> Result<Vec<IssueRecord>, IssueError> {
    let transport = transport_for(cfg.replay.as_deref(), cfg.record.as_deref())?;
    let auth = match (cfg.replay.is_none(), env_value(&cfg.user_env), env_value(&cfg.token_env)) {
        (true, Some(user), Some(token)) => JiraAuth::Basic { user, token },
        (true, None, Some(token)) => JiraAuth::Bearer(token),
        _ => JiraAuth::None,
    };
    JiraClient::new(transport, cfg.endpoint.clone())?
        .with_auth(auth)
        .with_page_size(cfg.page_size)
        .fetch_all(&cfg.jql)
}

fn fetch_issues(config: &Config) -> Result<Vec<IssueRow>, PipelineError> {
    if !config.stages.issues {
        return Ok(Vec::new());
    }
    let mut records = Vec::new();
    if let Some(g) = &config.issues.github {
        records.extend(fetch_github(g).map_err(at(Stage::Issues))?);
    }
    if let Some(j) = &config.issues.jira {
        records.extend(fetch_jira(j).map_err(at(Stage::Issues))?);
    }
    Ok(dedup_records(records)
        .into_iter()
        .map(|issue| IssueRow {
            matches: config
                .lexicon
                .match_text(&issue.match_text(), SourceKind::Issue, &issue.document_id()),
            issue,
        })
        .collect())
}

fn build_candidates(
    config: &Config,
    commits: &[CommitRow],
    lifetimes: &[CommentLifetime],
    contexts: &HashMap<String, CommentContext>,
    issues: &[IssueRow],
) -> Vec<SampleTask> {
    let stratum = |kind: SourceKind| format!("{}/{}", config.project, kind.as_str());
    let mut out = Vec::new();
    for l in lifetimes {
        let doc = lifetime_document_id(l);
        let (payload, matches) = match contexts.get(&doc) {
            Some(ctx) => {
                let matches = config
                    .lexicon
                    .match_text(&ctx.excerpt[ctx.comment_start..ctx.comment_end], SourceKind::Comment, &doc)
                    .into_iter()
                    .map(|m| IndicatorMatch {
                        start: m.start + ctx.comment_start,
                        end: m.end + ctx.comment_start,
                        ..m
                    })
                    .collect();
                (ctx.excerpt.clone(), matches)
            }
            None => (l.key.clone(), l.matches.clone()),
        };
        out.push(SampleTask {
            task_id: format!("comment:{doc}"),
            source_kind: SourceKind::Comment,
            stratum: stratum(SourceKind::Comment),
            payload,
            matches,
        });
    }
    for c in commits.iter().filter(|c| c.has_indicator()) {
        out.push(SampleTask {
            task_id: format!("commit:{}", c.commit.commit_id),
            source_kind: SourceKind::CommitMessage,
            stratum: stratum(SourceKind::CommitMessage),
            payload: c.commit.message.clone(),
            matches: c.matches.clone(),
        });
    }
    for i in issues.iter().filter(|i| !i.matches.is_empty()) {
        out.push(SampleTask {
            task_id: format!("issue:{}", i.issue.document_id()),
            source_kind: SourceKind::Issue,
            stratum: stratum(SourceKind::Issue),
            payload: i.issue.match_text(),
            matches: i.matches.clone(),
        });
    }
    out
}

fn stratify(candidates: &[SampleTask]) -> BTreeMap<String, Vec<SampleTask>> {
    let mut strata: BTreeMap<String, Vec<SampleTask>> = BTreeMap::new();
    for t in candidates {
        strata.entry(t.stratum.clone()).or_default().push(t.clone());
    }
    strata
}

/// The machine-readable summary artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryDocument {
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub generated_at: String,
    pub summary: SummaryReport,
    pub link_rate_statement: String,
    pub sampling: SampleSpec,
    pub decisions: serde_json::Value,
    pub relevance: serde_json::Value,
    pub cooccurring_pairs: serde_json::Value,
    pub tags: Vec<ReleaseTag>,
    pub skipped_tags: Vec<SkippedTag>,
    pub candidates_per_stratum: BTreeMap<String, usize>,
    pub sampled_per_stratum: BTreeMap<String, usize>,
}

fn per_stratum(tasks: &[SampleTask]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tasks {
        *counts.entry(t.stratum.clone()).or_default() += 1;
    }
    counts
}

fn jsonl_bytes<T: Serialize>(meta: &ArtifactMeta, items: &[T]) -> Vec<u8> {
    datasets::write_jsonl(meta, items)
}

/// Serializes every artifact of a run. `generated_at` is the only input
/// that is not derived from the config and the mined data.
pub fn render_artifacts(config: &Config, output: &RunOutput, generated_at: &str) -> Vec<(&'static str, Vec<u8>)> {
    let lexicon_version = config.lexicon.version();
    let meta = |kind: &str| ArtifactMeta::new(kind, &config.sha256, lexicon_version);

    let by_doc = |it: &mut dyn Iterator<Item = (String, Vec<IndicatorMatch>)>| {
        cooccurring_pairs(&it.filter(|(_, m)| !m.is_empty()).collect())
    };
    let pairs = json!({
        "comment": by_doc(&mut output.lifetimes.iter().map(|l| (lifetime_document_id(l), l.matches.clone()))),
        "commit_message": by_doc(&mut output.commits.iter().map(|c| (c.commit.commit_id.clone(), c.matches.clone()))),
        "issue": by_doc(&mut output.issues.iter().map(|i| (i.issue.document_id(), i.matches.clone()))),
    });
    let decisions = json!({
        "lines_of_code": "physical newline-delimited lines of extension-mapped files at the newest release tag",
        "commit_scope": "full history reachable from HEAD, oldest first, merge commits once",
        "comment_identity": "normalized comment key plus first path, followed across file moves",
        "survival_bucket": "lifetimes grouped by length in release tags; removed versus still present at the last tag",
        "extensions": config.extensions.extensions().collect::<BTreeMap<_, _>>(),
        "github_slug": config.issues.github.as_ref().map(|g| g.slug.clone()),
        "jira_jql": config.issues.jira.as_ref().map(|j| j.jql.clone()),
        "issue_stage_enabled": config.stages.issues,
    });
    let relevance = serde_json::to_value(
        config
            .lexicon
            .relevance_summary(None)
            .expect("summary without judgments cannot fail"),
    )
    .expect("summary serializes");
    let doc = SummaryDocument {
        meta: meta("summary"),
        generated_at: generated_at.to_string(),
        link_rate_statement: output.summary.link_rate_statement(),
        summary: output.summary.clone(),
        sampling: config.sampling,
        decisions,
        relevance,
        cooccurring_pairs: pairs,
        tags: output.tags.clone(),
        skipped_tags: output.skipped_tags.clone(),
        candidates_per_stratum: per_stratum(&output.candidates),
        sampled_per_stratum: per_stratum(&output.sample),
    };
    let mut summary = serde_json::to_vec_pretty(&doc).expect("summary serializes");
    summary.push(b'\n');
    let table = survival_table(&output.lifetimes);

    vec![
        (COMMITS_CSV, datasets::write_csv(&meta("commits"), &output.commits)),
        (COMMITS_JSONL, jsonl_bytes(&meta("commits"), &output.commits)),
        (LIFETIMES_CSV, datasets::write_csv(&meta("comment_lifetimes"), &output.lifetimes)),
        (LIFETIMES_JSONL, jsonl_bytes(&meta("comment_lifetimes"), &output.lifetimes)),
        (ISSUES_CSV, datasets::write_csv(&meta("issues"), &output.issues)),
        (ISSUES_JSONL, jsonl_bytes(&meta("issues"), &output.issues)),
        (
            SURVIVAL_CSV,
            render_survival_figure_data(&table, Some(&meta("survival"))).into_bytes(),
        ),
        (SUMMARY_JSON, summary),
        (CANDIDATES_JSONL, jsonl_bytes(&meta("candidates"), &output.candidates)),
        (SAMPLE_JSONL, jsonl_bytes(&meta("sample_tasks"), &output.sample)),
    ]
}

/// Writes all files into a scratch directory beside `out`, then moves each
/// into place. On failure the scratch directory is removed and `out` is
/// left as it was.
pub fn write_atomically(out: &Path, files: &[(&str, Vec<u8>)]) -> std::io::Result<()> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let scratch = tempfile::Builder::new().prefix(".secmine-run-").tempdir_in(parent)?;
    for (name, bytes) in files {
        let path = scratch.path().join(name);
        std::fs::write(&path, bytes)?;
        std::fs::File::open(&path)?.sync_all()?;
    }
    std::fs::create_dir_all(out)?;
    for (name, _) in files {
        std::fs::rename(scratch.path().join(name), out.join(name))?;
    }
    Ok(())
}

/// Reads the summary artifact of a run directory.
pub fn load_summary(run_dir: &Path) -> Result<SummaryDocument, PipelineError> {
    let bytes = std::fs::read(run_dir.join(SUMMARY_JSON)).map_err(at(Stage::Write))?;
    serde_json::from_slice(&bytes).map_err(at(Stage::Write))
}

/// Redraws the sample of a finished run from its candidate export, with an
/// optional replacement sampling spec, and rewrites the sample artifact.
pub fn resample(run_dir: &Path, spec: Option<SampleSpec>) -> Result<Vec<SampleTask>, PipelineError> {
    let summary = load_summary(run_dir)?;
    let spec = spec.unwrap_or(summary.sampling);
    let bytes = std::fs::read(run_dir.join(CANDIDATES_JSONL)).map_err(at(Stage::Sample))?;
    let (meta, candidates) =
        datasets::read_jsonl::<SampleTask>(&bytes, "candidates").map_err(at(Stage::Sample))?;
    let sample = draw_sample(&stratify(&candidates), &spec).map_err(at(Stage::Sample))?;
    let meta = ArtifactMeta::new("sample_tasks", &meta.config_sha256, &meta.lexicon_version);
    write_atomically(run_dir, &[(SAMPLE_JSONL, jsonl_bytes(&meta, &sample))]).map_err(at(Stage::Write))?;
    Ok(sample)
}
