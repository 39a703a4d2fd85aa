//! Independent oracles and random generators shared by the integration
//! suites and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;

use secmine::comments::{CommentKind, LanguageProfile, RawComment};
use secmine::fixture::FixtureRepo;
use secmine::lexicon::Lexicon;

// ---------------------------------------------------------------------------
// Lexicon matching
// ---------------------------------------------------------------------------

/// Brute force over every substring: a substring matches a phrase when it
/// has no leading or trailing whitespace, sits between boundaries, and its
/// per-character lowercase form with whitespace runs collapsed to one space
/// equals the phrase.
pub fn naive_matches(phrases: &[String], text: &str) -> Vec<(String, usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |c| c.0);
    let boundary_before = |i: usize| i == 0 || !chars[i - 1].1.is_alphanumeric();
    let boundary_after = |j: usize| j == chars.len() || !chars[j].1.is_alphanumeric();
    let mut out = Vec::new();
    for i in 0..chars.len() {
        if !boundary_before(i) || chars[i].1.is_whitespace() {
            continue;
        }
        for j in (i + 1)..=chars.len() {
            if chars[j - 1].1.is_whitespace() || !boundary_after(j) {
                continue;
            }
            let mut norm = String::new();
            let mut in_ws = false;
            for &(_, c) in &chars[i..j] {
                if c.is_whitespace() {
                    if !in_ws {
                        norm.push(' ');
                    }
                    in_ws = true;
                } else {
                    norm.extend(c.to_lowercase());
                    in_ws = false;
                }
            }
            for p in phrases {
                if *p == norm {
                    out.push((p.clone(), byte_at(i), byte_at(j)));
                }
            }
        }
    }
    out.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
    out
}

const WORDS: &[&str] = &[
    "xss", "login", "ldap", "hack", "auth", "user", "name", "account", "key", "token", "pass", "sig", "é", "naïve",
];

pub fn random_phrases(rng: &mut impl Rng) -> Vec<String> {
    let n = rng.random_range(1..=6);
    let mut set = BTreeSet::new();
    while set.len() < n {
        let words = rng.random_range(1..=3);
        let p: Vec<&str> = (0..words).map(|_| *WORDS.choose(rng).unwrap()).collect();
        set.insert(p.join(" "));
    }
    set.into_iter().collect()
}

pub fn lexicon_of(phrases: &[String]) -> Lexicon {
    let text: String = phrases.iter().map(|p| format!("{p}\trelevant\t0\n")).collect();
    Lexicon::parse(&text).expect("generated lexicon is valid")
}

pub fn random_text(rng: &mut impl Rng) -> String {
    const SEPS: &[&str] = &[" ", "  ", "\t", "\n", " \n ", ".", "-", "_", ",", "", "/", "(", "1"];
    let n = rng.random_range(0..14);
    let mut s = String::new();
    for _ in 0..n {
        let w = WORDS.choose(rng).unwrap();
        let w: String = match rng.random_range(0..4) {
            0 => w.to_uppercase(),
            1 => {
                let mut c = w.chars();
                c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
            }
            _ => w.to_string(),
        };
        s.push_str(&w);
        s.push_str(SEPS.choose(rng).unwrap());
    }
    s
}

// ---------------------------------------------------------------------------
// Comment lexer
// ---------------------------------------------------------------------------

/// A generated source file together with the comments it was built from.
pub struct GeneratedSource {
    pub text: String,
    pub expected: Vec<RawComment>,
}

fn pick_text(rng: &mut impl Rng, pool: &[&str], max: usize) -> String {
    (0..rng.random_range(0..=max)).map(|_| *pool.choose(rng).unwrap()).collect()
}

/// Builds a file from code, string, line-comment and block-comment
/// segments. The expected comments are known by construction.
pub fn generate_source(rng: &mut impl Rng, profile: &LanguageProfile, path: &str) -> GeneratedSource {
    const CODE: &[&str] = &["x", "=", "1", ";", " ", "\n", "(", ")", "{", "}", "f", "echo"];
    // Everything that might confuse a lexer: markers, quotes, escapes.
    const NOISE: &[&str] = &["a", " ", "xss", "//", "/*", "#", "'", "\"", "`", "\\", "*", "/", "\t"];

    let mut text = String::new();
    let mut expected = Vec::new();
    let line_of = |s: &str| s.matches('\n').count() + 1;
    let segments = rng.random_range(0..12);
    for _ in 0..segments {
        match rng.random_range(0..4) {
            0 => text.push_str(&pick_text(rng, CODE, 6)),
            1 => {
                let Some(d) = profile.string_delimiters.choose(rng) else { continue };
                text.push(d.open);
                for _ in 0..rng.random_range(0..6) {
                    let piece = *NOISE.choose(rng).unwrap();
                    let c = piece.chars().next().unwrap();
                    match d.escape {
                        Some(e) if c == e => {
                            text.push(e);
                            text.push(*['n', e, d.close].choose(rng).unwrap());
                        }
                        _ if piece.contains(d.close) => {
                            if let Some(e) = d.escape {
                                text.push(e);
                                text.push(d.close);
                            }
                        }
                        _ => text.push_str(piece),
                    }
                    if rng.random_bool(0.1) {
                        text.push('\n');
                    }
                }
                text.push(d.close);
            }
            2 => {
                let Some(marker) = profile.line_markers.choose(rng) else { continue };
                let body: String = pick_text(rng, NOISE, 6);
                let start_line = line_of(&text);
                let comment = format!("{marker}{body}");
                text.push_str(&comment);
                expected.push(RawComment {
                    file_path: path.to_string(),
                    start_line,
                    end_line: start_line,
                    text: comment,
                    kind: CommentKind::Line,
                    marker: marker.clone(),
                    closer: None,
                });
                text.push('\n');
            }
            _ => {
                let Some((open, close)) = profile.block_delimiters.choose(rng) else { continue };
                let mut body = String::new();
                for _ in 0..rng.random_range(0..6) {
                    body.push_str(NOISE.choose(rng).unwrap());
                    if rng.random_bool(0.2) {
                        body.push('\n');
                    }
                }
                // The body must not close early, and its end must not fuse
                // with the closer into an earlier closer.
                let body = body.replace(close.as_str(), " ");
                let body = if close.starts_with('*') && body.ends_with('*') { format!("{body} ") } else { body };
                let comment = format!("{open}{body}{close}");
                if comment[open.len()..].find(close.as_str()) != Some(comment.len() - open.len() - close.len()) {
                    continue;
                }
                let start_line = line_of(&text);
                text.push_str(&comment);
                expected.push(RawComment {
                    file_path: path.to_string(),
                    start_line,
                    end_line: start_line + comment.matches('\n').count(),
                    text: comment,
                    kind: CommentKind::Block,
                    marker: open.clone(),
                    closer: Some(close.clone()),
                });
            }
        }
    }
    GeneratedSource { text, expected }
}

// ---------------------------------------------------------------------------
// Lifetimes
// ---------------------------------------------------------------------------

/// One scripted history: for every tag, the tracked keys and the file that
/// holds each of them. A key is in at most one file per tag.
#[derive(Debug, Clone)]
pub struct LifetimeScript {
    pub tags: Vec<BTreeMap<String, String>>,
}

pub const SCRIPT_FILES: &[&str] = &["a.php", "lib/b.js", "c.php"];

pub fn random_script(rng: &mut impl Rng) -> LifetimeScript {
    let n_tags = rng.random_range(1..=5);
    let n_keys = rng.random_range(1..=10);
    let keys: Vec<String> = (0..n_keys)
        .map(|i| if i % 3 == 2 { format!("plain note {i}") } else { format!("xss issue {i}") })
        .collect();
    let mut tags = Vec::new();
    let mut home: BTreeMap<String, String> = BTreeMap::new();
    for _ in 0..n_tags {
        let mut present = BTreeMap::new();
        for k in &keys {
            if rng.random_bool(0.6) {
                let file = home.entry(k.clone()).or_insert_with(|| SCRIPT_FILES.choose(rng).unwrap().to_string());
                if rng.random_bool(0.15) {
                    *file = SCRIPT_FILES.choose(rng).unwrap().to_string();
                }
                present.insert(k.clone(), file.clone());
            }
        }
        tags.push(present);
    }
    LifetimeScript { tags }
}

/// File contents of one tag and the 1-based line of every key.
pub fn render_tag(present: &BTreeMap<String, String>) -> (BTreeMap<String, String>, BTreeMap<String, usize>) {
    let mut files: BTreeMap<String, String> = SCRIPT_FILES
        .iter()
        .map(|f| (f.to_string(), if f.ends_with(".php") { "<?php\n".to_string() } else { String::new() }))
        .collect();
    let mut lines = BTreeMap::new();
    for (key, file) in present {
        let content = files.get_mut(file).unwrap();
        content.push_str("f();\n");
        lines.insert(key.clone(), content.matches('\n').count() + 1);
        content.push_str(&format!("// {key}\n"));
    }
    (files, lines)
}

/// Commits and tags the script into a fresh repository at `dir`.
pub fn build_script_repo(script: &LifetimeScript, dir: &Path) -> FixtureRepo {
    let mut repo = FixtureRepo::init(dir).unwrap();
    for (i, present) in script.tags.iter().enumerate() {
        let (files, _) = render_tag(present);
        repo.set_files(files.into_iter().map(|(k, v)| (k, v.into_bytes())).collect());
        let oid = repo.commit(&format!("release {i}"), 1_600_000_000 + i as i64 * 1000).unwrap();
        repo.tag(&format!("r{i}"), oid).unwrap();
    }
    repo
}

/// `(key, first_path, first_line, introduced, removed, censored, lifetime)`
pub type ExpectedLifetime = (String, String, usize, usize, Option<usize>, bool, usize);

/// Presence-matrix brute force: every maximal run of consecutive tags in
/// which a matching key is present is one lifetime.
pub fn presence_oracle(script: &LifetimeScript, lexicon: &Lexicon) -> Vec<ExpectedLifetime> {
    let last = script.tags.len() - 1;
    let keys: BTreeSet<&String> = script.tags.iter().flat_map(|t| t.keys()).collect();
    let mut out = Vec::new();
    for key in keys {
        if lexicon.match_text(key, secmine::lexicon::SourceKind::Comment, "").is_empty() {
            continue;
        }
        let present: Vec<bool> = script.tags.iter().map(|t| t.contains_key(key)).collect();
        let mut i = 0;
        while i <= last {
            if !present[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i <= last && present[i] {
                i += 1;
            }
            let (_, lines) = render_tag(&script.tags[start]);
            let path = script.tags[start][key].clone();
            let (removed, censored, lifetime) = if i <= last {
                (Some(i), false, i - start)
            } else {
                (None, true, last - start)
            };
            out.push((key.clone(), path, lines[key], start, removed, censored, lifetime));
        }
    }
    out.sort_by(|a, b| (a.3, &a.1, a.2, &a.0).cmp(&(b.3, &b.1, b.2, &b.0)));
    out
}

/// Lifetimes mined through the public repository, comment and tracker API.
pub fn mine_lifetimes(dir: &Path, lexicon: &Lexicon) -> Vec<secmine::tracker::CommentLifetime> {
    let miner = secmine::repo::RepoMiner::open(dir).unwrap();
    let map = secmine::comments::ExtensionMap::default();
    let snapshots: Vec<_> = miner
        .list_release_tags()
        .unwrap()
        .into_iter()
        .map(|tag| {
            let comments = miner
                .snapshot_files(&tag, |p| map.accepts(p))
                .unwrap()
                .flat_map(|blob| {
                    let blob = blob.unwrap();
                    let profile = map.detect(&blob.path).unwrap();
                    secmine::comments::extract_comments_from_bytes(&blob.content, profile, &blob.path)
                })
                .map(secmine::comments::normalize_comment)
                .collect();
            secmine::tracker::TagSnapshot { tag, comments }
        })
        .collect();
    secmine::tracker::build_timeline(&snapshots, lexicon).unwrap()
}

pub fn lifetime_tuple(l: &secmine::tracker::CommentLifetime) -> ExpectedLifetime {
    (
        l.key.clone(),
        l.first_path.clone(),
        l.first_line,
        l.introduced_index,
        l.removed_index,
        l.censored,
        l.lifetime,
    )
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Standard normal CDF by composite Simpson integration of the density.
pub fn normal_cdf(x: f64) -> f64 {
    let density = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let n = 20_000;
    let h = x.abs() / n as f64;
    let mut s = density(0.0) + density(x.abs());
    for i in 1..n {
        s += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = s * h / 3.0;
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Two-sided critical value by bisection on the CDF.
pub fn z_by_bisection(confidence: f64) -> f64 {
    let target = 1.0 - (1.0 - confidence) / 2.0;
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..100 {
        let mid = (lo + hi) / 2.0;
        if normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

/// Smallest `n` whose finite-population margin of error is within `margin`.
pub fn smallest_n_by_margin(population: u64, confidence: f64, margin: f64, p: f64) -> u64 {
    let z = z_by_bisection(confidence);
    let big_n = population as f64;
    let margin_of = |n: f64| {
        let fpc = if population > 1 { ((big_n - n) / (big_n - 1.0)).max(0.0) } else { 0.0 };
        z * (p * (1.0 - p) / n).sqrt() * fpc.sqrt()
    };
    (1..=population)
        .find(|&n| margin_of(n as f64) <= margin + 1e-12)
        .unwrap_or(population)
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

pub fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/demo")
}

pub fn golden_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/demo")
}

/// Copies the checked-in demo config and replay files into `dir` and
/// builds the demo repository next to them. Returns the config path.
pub fn stage_demo(dir: &Path) -> std::path::PathBuf {
    for name in ["secmine.toml", "github.jsonl", "jira.jsonl"] {
        std::fs::copy(fixture_dir().join(name), dir.join(name)).unwrap();
    }
    secmine::fixture::build_demo_repo(&dir.join("repo")).unwrap();
    dir.join("secmine.toml")
}

/// Artifact bytes with the run timestamp blanked.
pub fn normalized_artifact(name: &str, bytes: &[u8]) -> Vec<u8> {
    if name != secmine::report::pipeline::SUMMARY_JSON {
        return bytes.to_vec();
    }
    let mut doc: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    doc["generated_at"] = serde_json::Value::String(String::new());
    let mut out = serde_json::to_vec_pretty(&doc).unwrap();
    out.push(b'\n');
    out
}

/// Names of artifacts that differ from the goldens. With `UPDATE_GOLDEN`
/// set the goldens are rewritten instead.
pub fn compare_with_goldens(run_dir: &Path) -> Vec<String> {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut differing = Vec::new();
    for name in secmine::report::pipeline::ARTIFACTS {
        let got = normalized_artifact(name, &std::fs::read(run_dir.join(name)).unwrap());
        let golden = golden_dir().join(name);
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&golden, &got).unwrap();
        } else if std::fs::read(&golden).ok().as_deref() != Some(got.as_slice()) {
            differing.push(name.to_string());
        }
    }
    differing
}
