//! Comment lifetimes across ordered release tags, the per-lifetime survival
//! table and its breaking point.
//!
//! A comment identity is its normalized key plus the path where it first
//! appeared. Between consecutive tags an identity is followed to the same
//! key in the same path, or failing that to the same key in any other path
//! (file moves). Only comments matching at least one lexicon phrase are
//! tracked.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comments::NormalizedComment;
use crate::lexicon::{IndicatorMatch, Lexicon, SourceKind};
use crate::repo::ReleaseTag;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrackerError {
    #[error("no snapshots to build a timeline from")]
    EmptySnapshots,
    #[error("snapshots are not ordered by tag index ({previous} then {next})")]
    Unordered { previous: usize, next: usize },
}

#[derive(Debug, Clone)]
pub struct TagSnapshot {
    pub tag: ReleaseTag,
    pub comments: Vec<NormalizedComment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentLifetime {
    pub key: String,
    pub first_path: String,
    pub first_line: usize,
    pub introduced_index: usize,
    pub introduced_tag: String,
    /// First tag index at which the identity is absent.
    pub removed_index: Option<usize>,
    pub removed_tag: Option<String>,
    /// Still present at the last analyzed tag.
    pub censored: bool,
    /// In release tags.
    pub lifetime: usize,
    pub matches: Vec<IndicatorMatch>,
}

struct Active {
    key: String,
    current_path: String,
    first_path: String,
    first_line: usize,
    introduced_index: usize,
    introduced_tag: String,
}

impl Active {
    fn close(self, end: &ReleaseTag, removed: bool, matches: &[IndicatorMatch]) -> CommentLifetime {
        let document_id = format!("{}:{}@{}", self.first_path, self.first_line, self.introduced_tag);
        CommentLifetime {
            lifetime: end.order_index - self.introduced_index,
            removed_index: removed.then_some(end.order_index),
            removed_tag: removed.then(|| end.name.clone()),
            censored: !removed,
            matches: matches
                .iter()
                .map(|m| IndicatorMatch {
                    document_id: document_id.clone(),
                    ..m.clone()
                })
                .collect(),
            key: self.key,
            first_path: self.first_path,
            first_line: self.first_line,
            introduced_index: self.introduced_index,
            introduced_tag: self.introduced_tag,
        }
    }
}

/// One lifetime per tracked identity and presence run. A comment that
/// disappears and later comes back starts a new lifetime.
pub fn build_timeline(
    snapshots: &[TagSnapshot],
    lexicon: &Lexicon,
) -> Result<Vec<CommentLifetime>, TrackerError> {
    let last = snapshots.last().ok_or(TrackerError::EmptySnapshots)?;
    for w in snapshots.windows(2) {
        if w[0].tag.order_index >= w[1].tag.order_index {
            return Err(TrackerError::Unordered {
                previous: w[0].tag.order_index,
                next: w[1].tag.order_index,
            });
        }
    }

    let mut match_cache: HashMap<String, Vec<IndicatorMatch>> = HashMap::new();
    let mut active: Vec<Active> = Vec::new();
    let mut done: Vec<CommentLifetime> = Vec::new();

    for snap in snapshots {
        // key -> path -> first line of that key in the path
        let mut present: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
        for c in &snap.comments {
            let matches = match_cache
                .entry(c.key.clone())
                .or_insert_with(|| lexicon.match_text(&c.key, SourceKind::Comment, ""));
            if matches.is_empty() {
                continue;
            }
            let line = present
                .entry(c.key.as_str())
                .or_default()
                .entry(c.origin.file_path.as_str())
                .or_insert(c.origin.start_line);
            *line = (*line).min(c.origin.start_line);
        }

        let mut claimed: BTreeSet<(&str, &str)> = BTreeSet::new();
        let mut found = vec![false; active.len()];
        for (i, a) in active.iter().enumerate() {
            let Some((&key, paths)) = present.get_key_value(a.key.as_str()) else {
                continue;
            };
            if let Some((&path, _)) = paths.get_key_value(a.current_path.as_str()) {
                claimed.insert((key, path));
                found[i] = true;
            }
        }
        for (i, a) in active.iter_mut().enumerate() {
            if found[i] {
                continue;
            }
            let Some((&key, paths)) = present.get_key_value(a.key.as_str()) else {
                continue;
            };
            if let Some(&path) = paths.keys().find(|p| !claimed.contains(&(key, **p))) {
                claimed.insert((key, path));
                a.current_path = path.to_string();
                found[i] = true;
            }
        }

        let mut still_active = Vec::with_capacity(active.len());
        for (a, ok) in active.into_iter().zip(found) {
            if ok {
                still_active.push(a);
            } else {
                let matches = &match_cache[&a.key];
                done.push(a.close(&snap.tag, true, matches));
            }
        }
        active = still_active;

        for (key, paths) in &present {
            for (path, line) in paths {
                if claimed.contains(&(*key, *path)) {
                    continue;
                }
                active.push(Active {
                    key: key.to_string(),
                    current_path: path.to_string(),
                    first_path: path.to_string(),
                    first_line: *line,
                    introduced_index: snap.tag.order_index,
                    introduced_tag: snap.tag.name.clone(),
                });
            }
        }
    }

    for a in active {
        let matches = &match_cache[&a.key];
        done.push(a.close(&last.tag, false, matches));
    }
    done.sort_by(|a, b| {
        (a.introduced_index, &a.first_path, a.first_line, &a.key)
            .cmp(&(b.introduced_index, &b.first_path, b.first_line, &b.key))
    });
    Ok(done)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalBucket {
    /// Lifetime in release tags.
    pub k: usize,
    pub removed_count: usize,
    pub retained_count: usize,
    pub removed_pct: f64,
    pub retained_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurvivalTable {
    pub buckets: Vec<SurvivalBucket>,
    pub breaking_point: Option<f64>,
}

impl SurvivalTable {
    /// Builds a table from raw `(k, removed, retained)` counts.
    pub fn from_counts(counts: impl IntoIterator<Item = (usize, usize, usize)>) -> Self {
        let mut by_k: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (k, removed, retained) in counts {
            let e = by_k.entry(k).or_default();
            e.0 += removed;
            e.1 += retained;
        }
        let buckets: Vec<SurvivalBucket> = by_k
            .into_iter()
            .filter(|(_, (r, c))| r + c > 0)
            .map(|(k, (removed, retained))| {
                let total = (removed + retained) as f64;
                // Ratio first so that scaling both counts gives identical floats.
                let removed_pct = removed as f64 / total * 100.0;
                let retained_pct = retained as f64 / total * 100.0;
                SurvivalBucket {
                    k,
                    removed_count: removed,
                    retained_count: retained,
                    removed_pct,
                    retained_pct,
                }
            })
            .collect();
        let breaking_point = breaking_point(&buckets);
        Self {
            buckets,
            breaking_point,
        }
    }

    pub fn total(&self) -> usize {
        self.buckets
            .iter()
            .map(|b| b.removed_count + b.retained_count)
            .sum()
    }
}

/// Removed versus censored lifetimes for each lifetime value.
pub fn survival_table(lifetimes: &[CommentLifetime]) -> SurvivalTable {
    SurvivalTable::from_counts(lifetimes.iter().map(|l| {
        if l.censored {
            (l.lifetime, 0, 1)
        } else {
            (l.lifetime, 1, 0)
        }
    }))
}

/// Lifetime at which the removed share first drops below 50%, linearly
/// interpolated between the last bucket at or above 50% and the first bucket
/// below it. If the very first bucket is already below 50% its `k` is
/// returned; if no bucket drops below 50% there is no breaking point.
pub fn breaking_point(buckets: &[SurvivalBucket]) -> Option<f64> {
    let below = buckets.iter().position(|b| b.removed_pct < 50.0)?;
    let hi = &buckets[below];
    if below == 0 {
        return Some(hi.k as f64);
    }
    let lo = &buckets[below - 1];
    let (k1, k2) = (lo.k as f64, hi.k as f64);
    let (f1, f2) = (lo.removed_pct, hi.removed_pct);
    Some(k1 + (f1 - 50.0) / (f1 - f2) * (k2 - k1))
}
