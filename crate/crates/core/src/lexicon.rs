//! Security-indicator lexicon: loading, validation, matching and relevance
//! bookkeeping.
//!
//! A lexicon file is UTF-8 and line oriented. Each record is one line with
//! tab-separated fields:
//!
//! ```text
//! phrase<TAB>relevance<TAB>ambiguous<TAB>notes
//! pair:<TAB>left<TAB>right<TAB>effect
//! #@ key: value          (metadata)
//! # anything             (comment)
//! ```
//!
//! Matching is case-insensitive on word boundaries, where a boundary is the
//! start or end of the text or any non-alphanumeric character. Words of a
//! multi-word phrase may be separated by any run of whitespace in the text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lexicon shipped with the crate.
pub const DEFAULT_LEXICON: &str = include_str!("../data/default.lexicon");

const MAX_PHRASE_WORDS: usize = 6;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate phrase {phrase:?}")]
    DuplicatePhrase { line: usize, phrase: String },
    #[error("line {line}: invalid phrase {phrase:?}: {reason}")]
    InvalidPhrase {
        line: usize,
        phrase: String,
        reason: &'static str,
    },
    #[error("line {line}: pair references unknown phrase {phrase:?}")]
    UnknownPairPhrase { line: usize, phrase: String },
    #[error("line {line}: pair joins {phrase:?} with itself")]
    SelfPair { line: usize, phrase: String },
    #[error("label references unknown phrase {0:?}")]
    UnknownPhrase(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
    Unclassified,
}

impl Relevance {
    pub fn as_str(self) -> &'static str {
        match self {
            Relevance::Relevant => "relevant",
            Relevance::Irrelevant => "irrelevant",
            Relevance::Unclassified => "unclassified",
        }
    }
}

impl FromStr for Relevance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relevant" => Ok(Relevance::Relevant),
            "irrelevant" => Ok(Relevance::Irrelevant),
            "unclassified" => Ok(Relevance::Unclassified),
            other => Err(format!(
                "relevance must be relevant|irrelevant|unclassified, got {other:?}"
            )),
        }
    }
}

/// A human judgment on one indicator occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Relevant,
    Irrelevant,
    Unsure,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Relevant => "relevant",
            Verdict::Irrelevant => "irrelevant",
            Verdict::Unsure => "unsure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub phrase: String,
    pub relevance: Relevance,
    /// The phrase has known non-security senses (package names, UI widgets).
    /// Only consulted during triage, never used to suppress matches.
    pub ambiguous: bool,
    pub notes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairEffect {
    PromotesRelevance,
    Informational,
}

impl FromStr for PairEffect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "promotes_relevance" => Ok(PairEffect::PromotesRelevance),
            "informational" => Ok(PairEffect::Informational),
            other => Err(format!(
                "pair effect must be promotes_relevance|informational, got {other:?}"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRule {
    pub left: String,
    pub right: String,
    pub effect: PairEffect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Comment,
    CommitMessage,
    Issue,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Comment => "comment",
            SourceKind::CommitMessage => "commit_message",
            SourceKind::Issue => "issue",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comment" => Ok(SourceKind::Comment),
            "commit_message" => Ok(SourceKind::CommitMessage),
            "issue" => Ok(SourceKind::Issue),
            other => Err(format!("unknown source kind {other:?}")),
        }
    }
}

/// One occurrence of a lexicon phrase. `start..end` is a byte range into the
/// matched document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndicatorMatch {
    pub phrase: String,
    pub source_kind: SourceKind,
    pub start: usize,
    pub end: usize,
    pub document_id: String,
}

#[derive(Debug, Clone)]
struct CompiledPhrase {
    words: Vec<Vec<char>>,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    indicators: Vec<Indicator>,
    pairs: Vec<PairRule>,
    version: String,
    metadata: BTreeMap<String, String>,
    compiled: Vec<CompiledPhrase>,
    by_first_char: HashMap<char, Vec<usize>>,
    by_phrase: HashMap<String, usize>,
}

impl Lexicon {
    /// Builds a lexicon from already-parsed records, enforcing the phrase and
    /// pair invariants.
    pub fn new(
        indicators: Vec<Indicator>,
        pairs: Vec<PairRule>,
        version: impl Into<String>,
    ) -> Result<Self, LexiconError> {
        let mut builder = Builder::default();
        for (i, ind) in indicators.into_iter().enumerate() {
            builder.push_indicator(i + 1, ind)?;
        }
        for (i, pair) in pairs.into_iter().enumerate() {
            builder.push_pair(i + 1, pair)?;
        }
        builder.metadata.insert("version".into(), version.into());
        Ok(builder.finish())
    }

    /// Parses the lexicon file format.
    pub fn parse(input: &str) -> Result<Self, LexiconError> {
        let mut builder = Builder::default();
        for (idx, raw) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if let Some(meta) = line.strip_prefix("#@") {
                let (key, value) = meta.split_once(':').ok_or_else(|| LexiconError::Parse {
                    line: line_no,
                    message: "metadata line must be \"#@ key: value\"".into(),
                })?;
                builder
                    .metadata
                    .insert(key.trim().to_string(), value.trim().to_string());
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("pair:") {
                let rest = rest.strip_prefix('\t').unwrap_or(rest);
                let fields: Vec<&str> = rest.split('\t').collect();
                if fields.len() != 3 {
                    return Err(LexiconError::Parse {
                        line: line_no,
                        message: format!(
                            "pair rule needs 3 tab-separated fields, found {}",
                            fields.len()
                        ),
                    });
                }
                let effect = fields[2]
                    .parse()
                    .map_err(|message| LexiconError::Parse { line: line_no, message })?;
                builder.push_pair(
                    line_no,
                    PairRule {
                        left: fields[0].to_string(),
                        right: fields[1].to_string(),
                        effect,
                    },
                )?;
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() < 3 {
                return Err(LexiconError::Parse {
                    line: line_no,
                    message: format!(
                        "indicator record needs phrase, relevance, ambiguous[, notes]; found {} field(s)",
                        fields.len()
                    ),
                });
            }
            let relevance = fields[1]
                .parse()
                .map_err(|message| LexiconError::Parse { line: line_no, message })?;
            let ambiguous = match fields[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(LexiconError::Parse {
                        line: line_no,
                        message: format!("ambiguous flag must be 0 or 1, got {other:?}"),
                    })
                }
            };
            builder.push_indicator(
                line_no,
                Indicator {
                    phrase: fields[0].to_string(),
                    relevance,
                    ambiguous,
                    notes: fields.get(3).unwrap_or(&"").to_string(),
                },
            )?;
        }
        Ok(builder.finish())
    }

    pub fn default_lexicon() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    pub fn pairs(&self) -> &[PairRule] {
        &self.pairs
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn get(&self, phrase: &str) -> Option<&Indicator> {
        self.by_phrase.get(phrase).map(|&i| &self.indicators[i])
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    /// Finds every occurrence of every phrase in `text`.
    ///
    /// Matches may overlap. The result is ordered by start offset, then
    /// phrase.
    pub fn match_text(
        &self,
        text: &str,
        source_kind: SourceKind,
        document_id: &str,
    ) -> Vec<IndicatorMatch> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut at_start: Vec<IndicatorMatch> = Vec::new();
        for i in 0..chars.len() {
            if i > 0 && chars[i - 1].1.is_alphanumeric() {
                continue;
            }
            let Some(first) = chars[i].1.to_lowercase().next() else {
                continue;
            };
            let Some(candidates) = self.by_first_char.get(&first) else {
                continue;
            };
            for &pid in candidates {
                let Some(end_idx) = match_at(&chars, i, &self.compiled[pid]) else {
                    continue;
                };
                if chars.get(end_idx).is_some_and(|(_, c)| c.is_alphanumeric()) {
                    continue;
                }
                let end = chars.get(end_idx).map_or(text.len(), |(b, _)| *b);
                at_start.push(IndicatorMatch {
                    phrase: self.indicators[pid].phrase.clone(),
                    source_kind,
                    start: chars[i].0,
                    end,
                    document_id: document_id.to_string(),
                });
            }
            at_start.sort_by(|a, b| a.phrase.cmp(&b.phrase));
            out.append(&mut at_start);
        }
        out
    }

    /// Per-class counts for this lexicon, optionally with human-label tallies.
    pub fn relevance_summary(
        &self,
        judgments: Option<&[PhraseJudgment]>,
    ) -> Result<RelevanceSummary, LexiconError> {
        let mut summary = RelevanceSummary {
            total: self.indicators.len(),
            ..RelevanceSummary::default()
        };
        for ind in &self.indicators {
            match ind.relevance {
                Relevance::Relevant => summary.relevant += 1,
                Relevance::Irrelevant => summary.irrelevant += 1,
                Relevance::Unclassified => summary.unclassified += 1,
            }
        }
        summary.reference = ReferenceCounts::from_metadata(&self.metadata);
        if let Some(judgments) = judgments {
            let mut tallies: BTreeMap<String, VerdictTally> = self
                .indicators
                .iter()
                .map(|i| (i.phrase.clone(), VerdictTally::default()))
                .collect();
            for j in judgments {
                let tally = tallies
                    .get_mut(&j.phrase)
                    .ok_or_else(|| LexiconError::UnknownPhrase(j.phrase.clone()))?;
                tally.add(j.verdict);
            }
            summary.tallies = Some(tallies);
        }
        Ok(summary)
    }
}

fn match_at(chars: &[(usize, char)], start: usize, phrase: &CompiledPhrase) -> Option<usize> {
    let mut pos = start;
    for (wi, word) in phrase.words.iter().enumerate() {
        if wi > 0 {
            let ws_start = pos;
            while chars.get(pos).is_some_and(|(_, c)| c.is_whitespace()) {
                pos += 1;
            }
            if pos == ws_start {
                return None;
            }
        }
        let mut matched = 0;
        while matched < word.len() {
            let (_, c) = chars.get(pos)?;
            let mut consumed = 0;
            for lc in c.to_lowercase() {
                if word.get(matched + consumed) != Some(&lc) {
                    return None;
                }
                consumed += 1;
            }
            matched += consumed;
            pos += 1;
        }
    }
    Some(pos)
}

#[derive(Default)]
struct Builder {
    indicators: Vec<Indicator>,
    pairs: Vec<PairRule>,
    metadata: BTreeMap<String, String>,
    by_phrase: HashMap<String, usize>,
}

impl Builder {
    fn push_indicator(&mut self, line: usize, ind: Indicator) -> Result<(), LexiconError> {
        if let Err(reason) = validate_phrase(&ind.phrase) {
            return Err(LexiconError::InvalidPhrase {
                line,
                phrase: ind.phrase,
                reason,
            });
        }
        if self.by_phrase.contains_key(&ind.phrase) {
            return Err(LexiconError::DuplicatePhrase {
                line,
                phrase: ind.phrase,
            });
        }
        self.by_phrase.insert(ind.phrase.clone(), self.indicators.len());
        self.indicators.push(ind);
        Ok(())
    }

    fn push_pair(&mut self, line: usize, pair: PairRule) -> Result<(), LexiconError> {
        for phrase in [&pair.left, &pair.right] {
            if !self.by_phrase.contains_key(phrase) {
                return Err(LexiconError::UnknownPairPhrase {
                    line,
                    phrase: phrase.clone(),
                });
            }
        }
        if pair.left == pair.right {
            return Err(LexiconError::SelfPair {
                line,
                phrase: pair.left,
            });
        }
        self.pairs.push(pair);
        Ok(())
    }

    fn finish(self) -> Lexicon {
        let compiled: Vec<CompiledPhrase> = self
            .indicators
            .iter()
            .map(|i| CompiledPhrase {
                words: i.phrase.split(' ').map(|w| w.chars().collect()).collect(),
            })
            .collect();
        let mut by_first_char: HashMap<char, Vec<usize>> = HashMap::new();
        for (i, c) in compiled.iter().enumerate() {
            by_first_char.entry(c.words[0][0]).or_default().push(i);
        }
        let version = self
            .metadata
            .get("version")
            .cloned()
            .unwrap_or_else(|| "unversioned".to_string());
        Lexicon {
            indicators: self.indicators,
            pairs: self.pairs,
            version,
            metadata: self.metadata,
            compiled,
            by_first_char,
            by_phrase: self.by_phrase,
        }
    }
}

fn validate_phrase(phrase: &str) -> Result<(), &'static str> {
    if phrase.is_empty() {
        return Err("phrase is empty");
    }
    if phrase.chars().flat_map(char::to_lowercase).ne(phrase.chars()) {
        return Err("phrase must be lowercase");
    }
    let words: Vec<&str> = phrase.split(' ').collect();
    if words.iter().any(|w| w.is_empty() || w.chars().any(char::is_whitespace)) {
        return Err("words must be separated by single spaces without leading or trailing whitespace");
    }
    if words.len() > MAX_PHRASE_WORDS {
        return Err("phrase has more than 6 words");
    }
    Ok(())
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Lexicon::parse(&text)
}

/// One phrase-level human judgment, as fed to [`Lexicon::relevance_summary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseJudgment {
    pub phrase: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictTally {
    pub relevant: usize,
    pub irrelevant: usize,
    pub unsure: usize,
}

impl VerdictTally {
    pub fn add(&mut self, verdict: Verdict) {
        match verdict {
            Verdict::Relevant => self.relevant += 1,
            Verdict::Irrelevant => self.irrelevant += 1,
            Verdict::Unsure => self.unsure += 1,
        }
    }

    /// The strictly most frequent verdict; ties and empty tallies are unsure.
    pub fn majority(&self) -> Verdict {
        let counts = [
            (Verdict::Relevant, self.relevant),
            (Verdict::Irrelevant, self.irrelevant),
            (Verdict::Unsure, self.unsure),
        ];
        let max = counts.iter().map(|c| c.1).max().unwrap_or(0);
        let mut top = counts.iter().filter(|c| c.1 == max);
        match (top.next(), top.next()) {
            (Some(&(v, n)), None) if n > 0 => v,
            _ => Verdict::Unsure,
        }
    }
}

/// Counts carried as lexicon metadata describing the universe the shipped
/// phrases were drawn from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCounts {
    pub candidates: Option<usize>,
    pub classified: Option<usize>,
    pub relevant: Option<usize>,
    pub irrelevant: Option<usize>,
}

impl ReferenceCounts {
    fn from_metadata(meta: &BTreeMap<String, String>) -> Option<Self> {
        let get = |k: &str| meta.get(k).and_then(|v| v.parse().ok());
        let counts = ReferenceCounts {
            candidates: get("reference_candidates"),
            classified: get("reference_classified"),
            relevant: get("reference_relevant"),
            irrelevant: get("reference_irrelevant"),
        };
        (counts != ReferenceCounts::default()).then_some(counts)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceSummary {
    pub total: usize,
    pub relevant: usize,
    pub irrelevant: usize,
    pub unclassified: usize,
    pub reference: Option<ReferenceCounts>,
    pub tallies: Option<BTreeMap<String, VerdictTally>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairCount {
    pub left: String,
    pub right: String,
    pub count: usize,
}

/// Counts, for every unordered pair of distinct phrases, the documents in
/// which both occur. Sorted by count descending, then by phrases.
pub fn cooccurring_pairs(
    matches_by_document: &BTreeMap<String, Vec<IndicatorMatch>>,
) -> Vec<PairCount> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for matches in matches_by_document.values() {
        let phrases: BTreeSet<&str> = matches.iter().map(|m| m.phrase.as_str()).collect();
        let phrases: Vec<&str> = phrases.into_iter().collect();
        for (i, a) in phrases.iter().enumerate() {
            for b in &phrases[i + 1..] {
                *counts.entry((a.to_string(), b.to_string())).or_default() += 1;
            }
        }
    }
    let mut out: Vec<PairCount> = counts
        .into_iter()
        .map(|((left, right), count)| PairCount { left, right, count })
        .collect();
    out.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.left.cmp(&b.left))
            .then_with(|| a.right.cmp(&b.right))
    });
    out
}
