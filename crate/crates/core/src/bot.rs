//! CI check: security-indicator comments introduced or removed between two
//! revisions.
//!
//! Comment identity is the normalized key per file, the same identity the
//! lifetime tracker uses. An edited comment shows up as one removal plus one
//! introduction.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::comments::{extract_comments, normalize_comment, ExtensionMap};
use crate::lexicon::{Lexicon, SourceKind};
use crate::repo::{RepoError, RepoMiner};

const EXCERPT_CHARS: usize = 80;
const BINARY_SNIFF_BYTES: usize = 8000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub line: usize,
    pub key: String,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffFindings {
    pub base: String,
    pub head: String,
    pub introduced: Vec<Finding>,
    pub removed: Vec<Finding>,
}

impl DiffFindings {
    pub fn is_empty(&self) -> bool {
        self.introduced.is_empty() && self.removed.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ExitPolicy {
    #[default]
    #[value(alias = "warn_only")]
    WarnOnly,
    #[value(alias = "fail_on_introduced")]
    FailOnIntroduced,
    #[value(alias = "fail_on_any")]
    FailOnAny,
}

impl FromStr for ExitPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "warn_only" => Ok(ExitPolicy::WarnOnly),
            "fail_on_introduced" => Ok(ExitPolicy::FailOnIntroduced),
            "fail_on_any" => Ok(ExitPolicy::FailOnAny),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

/// `key -> (first line, phrases)` for the indicator-bearing comments of one
/// file.
pub type CommentIndex = BTreeMap<String, (usize, Vec<String>)>;

pub(crate) fn is_binary(bytes: &[u8]) -> bool {
    bytes[..bytes.len().min(BINARY_SNIFF_BYTES)].contains(&0)
}

/// Indexes the indicator-bearing comments of one file's content.
pub fn index_comments(
    path: &str,
    content: &[u8],
    lexicon: &Lexicon,
    extensions: &ExtensionMap,
) -> Option<CommentIndex> {
    let profile = extensions.detect(path)?;
    if is_binary(content) {
        return None;
    }
    let text = String::from_utf8_lossy(content);
    let mut index = CommentIndex::new();
    for raw in extract_comments(&text, profile, path) {
        let c = normalize_comment(raw);
        if index.contains_key(&c.key) {
            continue;
        }
        let mut phrases: Vec<String> = lexicon
            .match_text(&c.key, SourceKind::Comment, path)
            .into_iter()
            .map(|m| m.phrase)
            .collect();
        if phrases.is_empty() {
            continue;
        }
        phrases.sort();
        phrases.dedup();
        index.insert(c.key, (c.origin.start_line, phrases));
    }
    Some(index)
}

/// Compares indicator-bearing comment keys of every changed file at `base`
/// and `head`. Files without a language profile and binary files are
/// skipped.
pub fn diff_indicators(
    miner: &RepoMiner,
    base: &str,
    head: &str,
    lexicon: &Lexicon,
    extensions: &ExtensionMap,
) -> Result<DiffFindings, RepoError> {
    let base_id = miner.resolve_commit(base)?.to_string();
    let head_id = miner.resolve_commit(head)?.to_string();
    let mut findings = DiffFindings {
        base: base_id.clone(),
        head: head_id.clone(),
        introduced: Vec::new(),
        removed: Vec::new(),
    };
    for path in miner.changed_paths(&base_id, &head_id)? {
        if !extensions.accepts(&path) {
            continue;
        }
        let before = miner.read_file(&base_id, &path)?;
        let after = miner.read_file(&head_id, &path)?;
        if before.iter().chain(after.iter()).any(|b| is_binary(b)) {
            continue;
        }
        let index = |content: Option<Vec<u8>>| {
            content
                .and_then(|c| index_comments(&path, &c, lexicon, extensions))
                .unwrap_or_default()
        };
        let (old, new) = (index(before), index(after));
        diff_indexes(&path, &old, &new, &mut findings);
    }
    Ok(findings)
}

/// Appends the differences between two per-file indexes.
pub fn diff_indexes(path: &str, old: &CommentIndex, new: &CommentIndex, into: &mut DiffFindings) {
    let finding = |key: &String, (line, phrases): &(usize, Vec<String>)| Finding {
        path: path.to_string(),
        line: *line,
        key: key.clone(),
        phrases: phrases.clone(),
    };
    into.introduced.extend(
        new.iter()
            .filter(|(k, _)| !old.contains_key(*k))
            .map(|(k, v)| finding(k, v)),
    );
    into.removed.extend(
        old.iter()
            .filter(|(k, _)| !new.contains_key(*k))
            .map(|(k, v)| finding(k, v)),
    );
    let order = |a: &Finding, b: &Finding| (&a.path, a.line, &a.key).cmp(&(&b.path, b.line, &b.key));
    into.introduced.sort_by(order);
    into.removed.sort_by(order);
}

fn excerpt(key: &str) -> String {
    if key.chars().count() <= EXCERPT_CHARS {
        key.to_string()
    } else {
        key.chars().take(EXCERPT_CHARS).collect()
    }
}

pub fn render_findings(findings: &DiffFindings, format: OutputFormat) -> String {
    match format {
        OutputFormat::Structured => {
            let mut s = serde_json::to_string_pretty(findings).expect("findings serialize");
            s.push('\n');
            s
        }
        OutputFormat::Text => {
            if findings.is_empty() {
                return "no security-indicator comment changes\n".to_string();
            }
            let mut out = String::new();
            for (sign, list) in [('+', &findings.introduced), ('-', &findings.removed)] {
                for f in list {
                    let _ = writeln!(
                        out,
                        "{sign} {}:{} [{}] {}",
                        f.path,
                        f.line,
                        f.phrases.join(", "),
                        excerpt(&f.key)
                    );
                }
            }
            out
        }
    }
}

pub fn exit_policy(findings: &DiffFindings, policy: ExitPolicy) -> i32 {
    let fail = match policy {
        ExitPolicy::WarnOnly => false,
        ExitPolicy::FailOnIntroduced => !findings.introduced.is_empty(),
        ExitPolicy::FailOnAny => !findings.is_empty(),
    };
    i32::from(fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finding(path: &str, line: usize, key: &str, phrases: &[&str]) -> Finding {
        Finding {
            path: path.into(),
            line,
            key: key.into(),
            phrases: phrases.iter().map(|p| p.to_string()).collect(),
        }
    }

    fn findings(introduced: Vec<Finding>, removed: Vec<Finding>) -> DiffFindings {
        DiffFindings {
            base: "b".into(),
            head: "h".into(),
            introduced,
            removed,
        }
    }

    #[test]
    fn text_rendering() {
        let f = findings(vec![finding("src/a.php", 12, "fixme possible xss here", &["xss"])], vec![]);
        let text = render_findings(&f, OutputFormat::Text);
        assert!(text.starts_with("+ src/a.php:12 [xss] fixme possible xss here"), "{text}");
        let f = findings(vec![], vec![finding("a.php", 3, "hack for ldap login", &["hack", "ldap", "login"])]);
        assert_eq!(render_findings(&f, OutputFormat::Text), "- a.php:3 [hack, ldap, login] hack for ldap login\n");
        assert_eq!(
            render_findings(&findings(vec![], vec![]), OutputFormat::Text),
            "no security-indicator comment changes\n"
        );
    }

    #[test]
    fn excerpt_is_bounded() {
        let long = "xss ".repeat(40);
        let f = findings(vec![finding("a.php", 1, &long, &["xss"])], vec![]);
        let line = render_findings(&f, OutputFormat::Text);
        let excerpt = line.trim_end_matches('\n').splitn(4, ' ').nth(3).unwrap();
        assert_eq!(excerpt.chars().count(), 80);
    }

    #[test]
    fn structured_round_trip() {
        let f = findings(
            vec![finding("a.php", 1, "xss", &["xss"])],
            vec![finding("b.php", 2, "ldap login", &["ldap", "login"])],
        );
        let s = render_findings(&f, OutputFormat::Structured);
        let back: DiffFindings = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert!(s.find("\"base\"").unwrap() < s.find("\"head\"").unwrap());
    }

    #[test]
    fn policy_table() {
        let intro = findings(vec![finding("a", 1, "xss", &["xss"])], vec![]);
        let rem = findings(vec![], vec![finding("a", 1, "xss", &["xss"])]);
        let none = findings(vec![], vec![]);
        assert_eq!(exit_policy(&intro, ExitPolicy::WarnOnly), 0);
        assert_eq!(exit_policy(&intro, ExitPolicy::FailOnIntroduced), 1);
        assert_eq!(exit_policy(&rem, ExitPolicy::FailOnIntroduced), 0);
        assert_eq!(exit_policy(&rem, ExitPolicy::FailOnAny), 1);
        assert_eq!(exit_policy(&none, ExitPolicy::FailOnAny), 0);
        assert_eq!("fail-on-any".parse::<ExitPolicy>(), Ok(ExitPolicy::FailOnAny));
    }

    #[test]
    fn index_skips_binary_and_unmapped() {
        let lex = Lexicon::default_lexicon();
        let map = ExtensionMap::default();
        assert!(index_comments("a.md", b"// xss", &lex, &map).is_none());
        assert!(index_comments("a.php", b"// xss\0", &lex, &map).is_none());
        let idx = index_comments("a.php", b"<?php\n// XSS here\n// xss here\n", &lex, &map).unwrap();
        assert_eq!(idx["xss here"], (2, vec!["xss".to_string()]));
    }
}
