//! Append-only label log and the statistics derived from it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{PhraseJudgment, Verdict, VerdictTally};
use crate::sampler::SampleTask;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("label store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("label store {path} is corrupt at line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub task_id: String,
    pub rater: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub phrase_verdicts: BTreeMap<String, Verdict>,
    /// UTC seconds.
    pub labeled_at: i64,
}

impl Label {
    /// Verdict for one matched phrase: the explicit phrase verdict, else the
    /// task verdict.
    pub fn phrase_verdict(&self, phrase: &str) -> Verdict {
        self.phrase_verdicts.get(phrase).copied().unwrap_or(self.verdict)
    }
}

/// Durable label log. Every accepted label is one JSON line, synced to disk
/// before [`LabelStore::append`] returns.
pub struct LabelStore {
    path: PathBuf,
    file: File,
    labels: Vec<Label>,
}

impl LabelStore {
    /// Opens or creates the log and replays it. A line that does not parse
    /// makes the whole store unusable.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        let mut labels = Vec::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let label = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            labels.push(label);
        }
        Ok(Self { path, file, labels })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Full history in append order.
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn append(&mut self, label: Label) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(&label).expect("label serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.labels.push(label);
        Ok(())
    }
}

/// The newest label of every `(rater, task)` pair, in order of first
/// appearance of the pair.
pub fn latest_labels(labels: &[Label]) -> Vec<&Label> {
    let mut slot: HashMap<(&str, &str), usize> = HashMap::new();
    let mut out: Vec<&Label> = Vec::new();
    for l in labels {
        match slot.get(&(l.rater.as_str(), l.task_id.as_str())) {
            Some(&i) => out[i] = l,
            None => {
                slot.insert((l.rater.as_str(), l.task_id.as_str()), out.len());
                out.push(l);
            }
        }
    }
    out
}

/// One judgment per matched phrase occurrence of every latest label.
pub fn phrase_judgments(labels: &[Label], tasks: &HashMap<&str, &SampleTask>) -> Vec<PhraseJudgment> {
    let mut out = Vec::new();
    for l in latest_labels(labels) {
        let Some(task) = tasks.get(l.task_id.as_str()) else {
            continue;
        };
        let phrases: BTreeSet<&str> = task.matches.iter().map(|m| m.phrase.as_str()).collect();
        out.extend(phrases.into_iter().map(|p| PhraseJudgment {
            phrase: p.to_string(),
            verdict: l.phrase_verdict(p),
        }));
    }
    out
}

/// Phrases whose majority verdict over the given judgments is relevant.
pub fn relevant_phrases(judgments: &[PhraseJudgment]) -> BTreeSet<String> {
    let mut tallies: BTreeMap<&str, VerdictTally> = BTreeMap::new();
    for j in judgments {
        tallies.entry(&j.phrase).or_default().add(j.verdict);
    }
    tallies
        .into_iter()
        .filter(|(_, t)| t.majority() == Verdict::Relevant)
        .map(|(p, _)| p.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub base_relevant: BTreeSet<String>,
    pub other_relevant: BTreeSet<String>,
    /// `100 * |base ∩ other| / |base|`.
    pub overlap_pct: f64,
    /// Set when `base_relevant` is empty.
    pub undefined: bool,
}

pub fn agreement(base_relevant: BTreeSet<String>, other_relevant: BTreeSet<String>) -> AgreementReport {
    let shared = base_relevant.intersection(&other_relevant).count();
    let (overlap_pct, undefined) = crate::report::percentage(shared, base_relevant.len());
    AgreementReport {
        base_relevant,
        other_relevant,
        overlap_pct,
        undefined,
    }
}

pub fn compute_agreement(
    labels: &[Label],
    tasks: &HashMap<&str, &SampleTask>,
    other_relevant: &[String],
) -> AgreementReport {
    let base = relevant_phrases(&phrase_judgments(labels, tasks));
    let other = other_relevant
        .iter()
        .map(|p| p.trim().to_lowercase())
        .filter(|p| !p.is_empty())
        .collect();
    agreement(base, other)
}
