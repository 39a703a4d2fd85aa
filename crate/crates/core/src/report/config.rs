//! Pipeline configuration (TOML).
//!
//! ```toml
//! project = "demo"
//! repository = "repo"
//! lexicon = "security.lexicon"   # optional, bundled lexicon otherwise
//! output = "runs/demo"
//!
//! [extensions]                    # optional, replaces the default map
//! php = "php"
//! js = "javascript"
//!
//! [sampling]
//! seed = 42
//!
//! [issues.github]
//! slug = "owner/name"
//! replay = "fixtures/github.jsonl"
//!
//! [issues.jira]
//! endpoint = "https://jira.example.com"
//! jql = "project = DEMO"
//! replay = "fixtures/jira.jsonl"
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::comments::ExtensionMap;
use crate::lexicon::{load_lexicon, Lexicon, LexiconError};
use crate::sampler::SampleSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("lexicon: {0}")]
    Lexicon(#[from] LexiconError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    project: String,
    repository: PathBuf,
    #[serde(default)]
    lexicon: Option<PathBuf>,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    extensions: Option<BTreeMap<String, String>>,
    #[serde(default)]
    sampling: SampleSpec,
    #[serde(default)]
    issues: IssuesConfig,
    #[serde(default)]
    stages: StagesConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssuesConfig {
    pub github: Option<GithubConfig>,
    pub jira: Option<JiraConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GithubConfig {
    pub slug: String,
    #[serde(default)]
    pub api_base: Option<String>,
    /// Replay file; when set, no network access happens.
    #[serde(default)]
    pub replay: Option<PathBuf>,
    /// Append live exchanges to this file.
    #[serde(default)]
    pub record: Option<PathBuf>,
    #[serde(default = "default_github_token_env")]
    pub token_env: String,
    #[serde(default = "default_page_size")]
    pub per_page: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JiraConfig {
    pub endpoint: String,
    pub jql: String,
    #[serde(default)]
    pub replay: Option<PathBuf>,
    #[serde(default)]
    pub record: Option<PathBuf>,
    #[serde(default = "default_jira_user_env")]
    pub user_env: String,
    #[serde(default = "default_jira_token_env")]
    pub token_env: String,
    #[serde(default = "default_page_size")]
    pub page_size: u32,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagesConfig {
    #[serde(default = "yes")]
    pub issues: bool,
}

impl Default for StagesConfig {
    fn default() -> Self {
        Self { issues: true }
    }
}

fn yes() -> bool {
    true
}

fn default_page_size() -> u32 {
    100
}

fn default_github_token_env() -> String {
    "GITHUB_TOKEN".into()
}

fn default_jira_user_env() -> String {
    "JIRA_USER".into()
}

fn default_jira_token_env() -> String {
    "JIRA_TOKEN".into()
}

/// A validated configuration with paths made absolute.
#[derive(Debug, Clone)]
pub struct Config {
    pub path: PathBuf,
    /// Hex SHA-256 of the config file bytes.
    pub sha256: String,
    pub project: String,
    pub repository: PathBuf,
    pub lexicon_path: Option<PathBuf>,
    pub lexicon: Lexicon,
    pub output: PathBuf,
    pub extensions: ExtensionMap,
    pub sampling: SampleSpec,
    pub issues: IssuesConfig,
    pub stages: StagesConfig,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(path, &bytes)
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self, ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        let text = std::str::from_utf8(bytes).map_err(|e| invalid(e.to_string()))?;
        let raw: RawConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        if raw.project.trim().is_empty() || raw.project.contains('/') {
            return Err(invalid("project must be a non-empty name without '/'".into()));
        }
        raw.sampling.validate().map_err(|e| invalid(format!("sampling: {e}")))?;
        let extensions = match &raw.extensions {
            None => ExtensionMap::default(),
            Some(map) => ExtensionMap::from_pairs(map.clone()).map_err(|e| invalid(format!("extensions: {e}")))?,
        };
        let lexicon_path = raw.lexicon.as_deref().map(resolve);
        let lexicon = match &lexicon_path {
            Some(p) => load_lexicon(p)?,
            None => Lexicon::default_lexicon(),
        };
        let mut issues = raw.issues.clone();
        if let Some(g) = issues.github.as_mut() {
            g.replay = g.replay.as_deref().map(resolve);
            g.record = g.record.as_deref().map(resolve);
        }
        if let Some(j) = issues.jira.as_mut() {
            j.replay = j.replay.as_deref().map(resolve);
            j.record = j.record.as_deref().map(resolve);
        }
        let output = resolve(
            raw.output
                .as_deref()
                .unwrap_or_else(|| Path::new("runs")),
        );
        let output = if raw.output.is_some() { output } else { output.join(&raw.project) };

        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex_sha256(bytes),
            project: raw.project,
            repository: resolve(&raw.repository),
            lexicon_path,
            lexicon,
            output,
            extensions,
            sampling: raw.sampling,
            issues,
            stages: raw.stages,
        })
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
