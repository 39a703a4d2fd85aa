//! Pipeline orchestration, project summary statistics and figure data.

pub mod config;
pub mod datasets;
pub mod pipeline;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::repo::ReleaseTag;
use crate::tracker::{CommentLifetime, SurvivalTable};
use datasets::{ArtifactMeta, CommitRow, IssueRow};

const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

/// Project characteristics plus the commit/issue link rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub project: String,
    pub years_of_history: f64,
    pub release_count: usize,
    pub commit_count: usize,
    pub lines_of_code: u64,
    pub indicator_commit_count: usize,
    pub indicator_commit_with_issue_count: usize,
    pub indicator_commit_with_issue_pct: f64,
    /// Set when there are no indicator commits and the rate is undefined.
    pub indicator_commit_with_issue_pct_undefined: bool,
    pub issue_count: usize,
    pub indicator_issue_count: usize,
    pub lifetimes_total: usize,
    pub breaking_point: Option<f64>,
}

impl SummaryReport {
    /// e.g. `30.0% of commits containing a security indicator have an
    /// associated issue linked to it (3 of 10)`.
    pub fn link_rate_statement(&self) -> String {
        format!(
            "{}% of commits containing a security indicator have an associated issue linked to it ({} of {})",
            format_pct(self.indicator_commit_with_issue_pct),
            self.indicator_commit_with_issue_count,
            self.indicator_commit_count
        )
    }

    /// Human-readable table of the summary.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, String); 10] = [
            ("project", self.project.clone()),
            ("years of history", format!("{:.1}", self.years_of_history)),
            ("releases", self.release_count.to_string()),
            ("commits", self.commit_count.to_string()),
            ("lines of code", self.lines_of_code.to_string()),
            ("indicator commits", self.indicator_commit_count.to_string()),
            ("indicator commits with issue", {
                let mut s = format!(
                    "{} ({}%)",
                    self.indicator_commit_with_issue_count,
                    format_pct(self.indicator_commit_with_issue_pct)
                );
                if self.indicator_commit_with_issue_pct_undefined {
                    s.push_str(" undefined: no indicator commits");
                }
                s
            }),
            (
                "issues (with indicators)",
                format!("{} ({})", self.issue_count, self.indicator_issue_count),
            ),
            ("comment lifetimes", self.lifetimes_total.to_string()),
            (
                "breaking point",
                self.breaking_point
                    .map(|b| format!("{} release tags", format_pct(b)))
                    .unwrap_or_else(|| "none".into()),
            ),
        ];
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<30} {value}");
        }
        let _ = writeln!(out, "\n{}", self.link_rate_statement());
        out
    }
}

/// One decimal, `.` as separator.
pub fn format_pct(value: f64) -> String {
    format!("{value:.1}")
}

/// `100 * with / total`, or `(0, true)` when `total` is zero.
pub fn percentage(with: usize, total: usize) -> (f64, bool) {
    if total == 0 {
        (0.0, true)
    } else {
        (with as f64 * 100.0 / total as f64, false)
    }
}

pub fn summary_stats(
    project: &str,
    commits: &[CommitRow],
    tags: &[ReleaseTag],
    lifetimes: &[CommentLifetime],
    issues: &[IssueRow],
    lines_of_code: u64,
) -> SummaryReport {
    let indicator: Vec<&CommitRow> = commits.iter().filter(|c| c.has_indicator()).collect();
    let with_issue = indicator.iter().filter(|c| c.has_issue_ref()).count();
    let (pct, undefined) = percentage(with_issue, indicator.len());
    let times = commits.iter().map(|c| c.commit.author_time);
    let years_of_history = match (times.clone().min(), times.max()) {
        (Some(first), Some(last)) => (last - first) as f64 / SECONDS_PER_YEAR,
        _ => 0.0,
    };
    SummaryReport {
        project: project.to_string(),
        years_of_history,
        release_count: tags.len(),
        commit_count: commits.len(),
        lines_of_code,
        indicator_commit_count: indicator.len(),
        indicator_commit_with_issue_count: with_issue,
        indicator_commit_with_issue_pct: pct,
        indicator_commit_with_issue_pct_undefined: undefined,
        issue_count: issues.len(),
        indicator_issue_count: issues.iter().filter(|i| !i.matches.is_empty()).count(),
        lifetimes_total: lifetimes.len(),
        breaking_point: crate::tracker::survival_table(lifetimes).breaking_point,
    }
}

/// Physical lines of one file: newline count, plus one for a final line
/// without a trailing newline.
pub fn physical_lines(content: &[u8]) -> u64 {
    let newlines = content.iter().filter(|&&b| b == b'\n').count() as u64;
    match content.last() {
        Some(&b) if b != b'\n' => newlines + 1,
        _ => newlines,
    }
}

pub fn count_lines_of_code<'a>(files: impl IntoIterator<Item = &'a [u8]>) -> u64 {
    files.into_iter().map(physical_lines).sum()
}

pub const SURVIVAL_COLUMNS: &str = "k,removed_pct,retained_pct,removed_count,retained_count";

/// CSV with one row per bucket and a closing `breaking_point` row. An empty
/// table renders as the header alone. With `meta`, a `#` metadata line
/// precedes the header.
pub fn render_survival_figure_data(table: &SurvivalTable, meta: Option<&ArtifactMeta>) -> String {
    let mut out = String::new();
    if let Some(meta) = meta {
        let _ = writeln!(out, "#{}", serde_json::to_string(meta).expect("meta serializes"));
    }
    let _ = writeln!(out, "{SURVIVAL_COLUMNS}");
    for b in &table.buckets {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            b.k,
            format_pct(b.removed_pct),
            format_pct(b.retained_pct),
            b.removed_count,
            b.retained_count
        );
    }
    if !table.buckets.is_empty() {
        let bp = table.breaking_point.map(format_pct).unwrap_or_default();
        let _ = writeln!(out, "breaking_point,{bp},,,");
    }
    out
}

pub fn emit_survival_figure_data(table: &SurvivalTable, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_survival_figure_data(table, None))
}
