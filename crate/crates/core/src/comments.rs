//! String-literal aware comment extraction and comment normalization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StringDelimiter {
    pub open: char,
    pub close: char,
    pub escape: Option<char>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub name: String,
    pub line_markers: Vec<String>,
    pub block_delimiters: Vec<(String, String)>,
    pub string_delimiters: Vec<StringDelimiter>,
}

impl LanguageProfile {
    pub fn php() -> Self {
        Self {
            name: "php".into(),
            line_markers: vec!["//".into(), "#".into()],
            block_delimiters: vec![("/*".into(), "*/".into())],
            string_delimiters: vec![quoted('\'', Some('\\')), quoted('"', Some('\\'))],
        }
    }

    pub fn javascript() -> Self {
        Self {
            name: "javascript".into(),
            line_markers: vec!["//".into()],
            block_delimiters: vec![("/*".into(), "*/".into())],
            string_delimiters: vec![
                quoted('\'', Some('\\')),
                quoted('"', Some('\\')),
                quoted('`', Some('\\')),
            ],
        }
    }

    pub fn css() -> Self {
        Self {
            name: "css".into(),
            line_markers: vec![],
            block_delimiters: vec![("/*".into(), "*/".into())],
            string_delimiters: vec![quoted('\'', Some('\\')), quoted('"', Some('\\'))],
        }
    }

    pub fn shell() -> Self {
        Self {
            name: "shell".into(),
            line_markers: vec!["#".into()],
            block_delimiters: vec![],
            string_delimiters: vec![quoted('\'', None), quoted('"', Some('\\'))],
        }
    }

    /// Checks the marker invariants: no empty markers, and block open and
    /// close differ.
    pub fn validate(&self) -> Result<(), String> {
        if self.line_markers.iter().any(String::is_empty) {
            return Err(format!("profile {}: empty line marker", self.name));
        }
        for (open, close) in &self.block_delimiters {
            if open.is_empty() || close.is_empty() {
                return Err(format!("profile {}: empty block delimiter", self.name));
            }
            if open == close {
                return Err(format!(
                    "profile {}: block delimiters must differ ({open:?})",
                    self.name
                ));
            }
        }
        Ok(())
    }
}

fn quoted(c: char, escape: Option<char>) -> StringDelimiter {
    StringDelimiter {
        open: c,
        close: c,
        escape,
    }
}

/// Maps file extensions to language profiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionMap {
    profiles: BTreeMap<String, LanguageProfile>,
    extensions: BTreeMap<String, String>,
}

impl Default for ExtensionMap {
    fn default() -> Self {
        let mut map = Self::builtin_profiles();
        for (ext, profile) in [
            ("php", "php"),
            ("js", "javascript"),
            ("mjs", "javascript"),
            ("cjs", "javascript"),
            ("jsx", "javascript"),
            ("ts", "javascript"),
            ("tsx", "javascript"),
            ("css", "css"),
            ("sh", "shell"),
            ("bash", "shell"),
        ] {
            map.extensions.insert(ext.into(), profile.into());
        }
        map
    }
}

impl ExtensionMap {
    /// Built-in profiles with no extensions mapped.
    pub fn builtin_profiles() -> Self {
        let profiles = [
            LanguageProfile::php(),
            LanguageProfile::javascript(),
            LanguageProfile::css(),
            LanguageProfile::shell(),
        ]
        .into_iter()
        .map(|p| (p.name.clone(), p))
        .collect();
        Self {
            profiles,
            extensions: BTreeMap::new(),
        }
    }

    /// Builds a map from `extension -> profile name` pairs over the built-in
    /// profiles.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut map = Self::builtin_profiles();
        for (ext, profile) in pairs {
            map.map_extension(ext, profile)?;
        }
        Ok(map)
    }

    pub fn map_extension(
        &mut self,
        ext: impl Into<String>,
        profile: impl Into<String>,
    ) -> Result<(), String> {
        let ext = ext.into().trim_start_matches('.').to_ascii_lowercase();
        let profile = profile.into();
        if !self.profiles.contains_key(&profile) {
            return Err(format!("unknown language profile {profile:?} for .{ext}"));
        }
        self.extensions.insert(ext, profile);
        Ok(())
    }

    pub fn add_profile(&mut self, profile: LanguageProfile) -> Result<(), String> {
        profile.validate()?;
        self.profiles.insert(profile.name.clone(), profile);
        Ok(())
    }

    pub fn extensions(&self) -> impl Iterator<Item = (&str, &str)> {
        self.extensions.iter().map(|(e, p)| (e.as_str(), p.as_str()))
    }

    pub fn accepts(&self, path: &str) -> bool {
        self.detect(path).is_some()
    }

    pub fn detect(&self, path: &str) -> Option<&LanguageProfile> {
        let ext = Path::new(path).extension()?.to_str()?.to_ascii_lowercase();
        self.profiles.get(self.extensions.get(&ext)?)
    }
}

pub fn detect_language_profile<'a>(path: &str, map: &'a ExtensionMap) -> Option<&'a LanguageProfile> {
    map.detect(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommentKind {
    Line,
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    pub file_path: String,
    /// 1-based.
    pub start_line: usize,
    /// 1-based, inclusive.
    pub end_line: usize,
    /// Verbatim, delimiters included.
    pub text: String,
    pub kind: CommentKind,
    /// Line marker or block opener that introduced the comment.
    pub marker: String,
    /// Block closer, `None` for line comments.
    pub closer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedComment {
    pub key: String,
    pub origin: RawComment,
}

enum Opener<'p> {
    Line(&'p str),
    Block(&'p str, &'p str),
}

/// Extracts all comments of `content` in source order.
///
/// Single pass over the characters with states code, line comment, block
/// comment and string. Comment markers inside string literals are ignored,
/// as are quotes inside comments. An unterminated block comment runs to the
/// end of the input; so does an unterminated string.
pub fn extract_comments(content: &str, profile: &LanguageProfile, file_path: &str) -> Vec<RawComment> {
    let mut openers: Vec<Opener<'_>> = profile
        .block_delimiters
        .iter()
        .map(|(o, c)| Opener::Block(o.as_str(), c.as_str()))
        .chain(profile.line_markers.iter().map(|m| Opener::Line(m.as_str())))
        .collect();
    // Longest marker wins when several start at the same position.
    openers.sort_by_key(|o| match o {
        Opener::Line(m) => std::cmp::Reverse(m.len()),
        Opener::Block(m, _) => std::cmp::Reverse(m.len()),
    });

    let mut out = Vec::new();
    let mut line = 1usize;
    let mut pos = 0usize;
    while pos < content.len() {
        let rest = &content[pos..];
        let opener = openers.iter().find(|o| match o {
            Opener::Line(m) | Opener::Block(m, _) => rest.starts_with(m),
        });
        match opener {
            Some(Opener::Block(open, close)) => {
                let body_start = pos + open.len();
                let end = content[body_start..]
                    .find(close)
                    .map_or(content.len(), |i| body_start + i + close.len());
                let text = &content[pos..end];
                let newlines = text.bytes().filter(|&b| b == b'\n').count();
                out.push(RawComment {
                    file_path: file_path.to_string(),
                    start_line: line,
                    end_line: line + newlines,
                    text: text.to_string(),
                    kind: CommentKind::Block,
                    marker: open.to_string(),
                    closer: Some(close.to_string()),
                });
                line += newlines;
                pos = end;
            }
            Some(Opener::Line(marker)) => {
                let end = rest.find('\n').map_or(content.len(), |i| pos + i);
                let text = content[pos..end].strip_suffix('\r').unwrap_or(&content[pos..end]);
                out.push(RawComment {
                    file_path: file_path.to_string(),
                    start_line: line,
                    end_line: line,
                    text: text.to_string(),
                    kind: CommentKind::Line,
                    marker: marker.to_string(),
                    closer: None,
                });
                pos = end;
            }
            None => {
                let c = rest.chars().next().expect("pos < len");
                pos += c.len_utf8();
                if c == '\n' {
                    line += 1;
                    continue;
                }
                let Some(delim) = profile.string_delimiters.iter().find(|d| d.open == c) else {
                    continue;
                };
                // Inside a string literal until the matching close.
                let mut chars = content[pos..].char_indices();
                let mut end = content.len();
                while let Some((i, ch)) = chars.next() {
                    if ch == '\n' {
                        line += 1;
                    }
                    if Some(ch) == delim.escape {
                        if let Some((_, escaped)) = chars.next() {
                            if escaped == '\n' {
                                line += 1;
                            }
                        }
                        continue;
                    }
                    if ch == delim.close {
                        end = pos + i + ch.len_utf8();
                        break;
                    }
                }
                pos = end;
            }
        }
    }
    out
}

/// Lossily decodes `bytes` (invalid UTF-8 becomes U+FFFD) and extracts.
pub fn extract_comments_from_bytes(
    bytes: &[u8],
    profile: &LanguageProfile,
    file_path: &str,
) -> Vec<RawComment> {
    extract_comments(&String::from_utf8_lossy(bytes), profile, file_path)
}

pub fn normalize_comment(raw: RawComment) -> NormalizedComment {
    NormalizedComment {
        key: comment_key(&raw.text, &raw.marker, raw.closer.as_deref()),
        origin: raw,
    }
}

/// Identity key of a comment: delimiters, leading markers and decorative
/// `*` line prefixes removed, lowercased, whitespace collapsed and trimmed.
///
/// The stripping step is repeated until nothing changes, so a key fed back
/// in yields itself.
pub fn comment_key(text: &str, marker: &str, closer: Option<&str>) -> String {
    let mut current = text.to_string();
    for _ in 0..16 {
        let next = key_pass(&current, marker, closer);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn key_pass(text: &str, marker: &str, closer: Option<&str>) -> String {
    let mut body = text.trim();
    if let Some(close) = closer {
        while let Some(b) = body.strip_suffix(close) {
            body = b.trim_end();
        }
    }
    let mut cleaned = String::with_capacity(body.len());
    for (i, line) in body.split('\n').enumerate() {
        let mut l = line.trim_start();
        loop {
            if i == 0 && !marker.is_empty() {
                if let Some(r) = l.strip_prefix(marker) {
                    // "///" and "/**" carry extra marker characters.
                    l = r.trim_start_matches(|c| marker.contains(c)).trim_start();
                    continue;
                }
            }
            if closer.is_some() && l.starts_with('*') {
                l = l.trim_start_matches('*').trim_start();
                continue;
            }
            break;
        }
        if i > 0 {
            cleaned.push(' ');
        }
        cleaned.push_str(l);
    }
    let lowered: String = cleaned.chars().flat_map(char::to_lowercase).collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}
