use proptest::prelude::*;

use secmine::issues::{IssueRecord, IssueSource};
use secmine::lexicon::{IndicatorMatch, SourceKind};
use secmine::repo::{CommitRecord, IssueRef};
use secmine::report::datasets::{read_csv, read_jsonl, write_csv, write_jsonl, ArtifactMeta, CommitRow, IssueRow};
use secmine::tracker::CommentLifetime;

fn text() -> impl Strategy<Value = String> {
    prop_oneof!["[a-zA-Z ,\"#\\n\\r\\t;-]{0,30}", "\\PC{0,20}"]
}

fn spans() -> impl Strategy<Value = Vec<(String, usize, usize)>> {
    proptest::collection::vec(("[a-z]{1,8}( [a-z]{1,6})?", 0usize..500, 1usize..20), 0..4)
        .prop_map(|v| v.into_iter().map(|(p, s, l)| (p, s, s + l)).collect())
}

fn matches(spans: Vec<(String, usize, usize)>, kind: SourceKind, doc: &str) -> Vec<IndicatorMatch> {
    spans
        .into_iter()
        .map(|(phrase, start, end)| IndicatorMatch { phrase, source_kind: kind, start, end, document_id: doc.to_string() })
        .collect()
}

fn meta(kind: &str) -> ArtifactMeta {
    ArtifactMeta::new(kind, "f00d", "1.0.0")
}

fn issue_ref() -> impl Strategy<Value = IssueRef> {
    prop_oneof![
        "[1-9][0-9]{0,5}".prop_map(IssueRef::numeric),
        "[A-Z]{2,10}-[1-9][0-9]{0,4}".prop_map(IssueRef::project_key),
    ]
}

prop_compose! {
    fn commit_row()(id in "[0-9a-f]{40}", time in any::<i64>(), message in text(),
                    refs in proptest::collection::vec(issue_ref(), 0..3), spans in spans()) -> CommitRow {
        CommitRow {
            matches: matches(spans, SourceKind::CommitMessage, &id),
            commit: CommitRecord { commit_id: id, message, author_time: time, issue_refs: refs },
        }
    }
}

prop_compose! {
    fn lifetime()(key in text(), path in "[a-z]{1,5}(/[a-z]{1,5})?\\.php", line in 1usize..1000,
                  intro in 0usize..50, span in proptest::option::of(1usize..20), tail in 0usize..20,
                  spans in spans()) -> CommentLifetime {
        let tag = |i: usize| format!("v{i}.0");
        let doc = format!("{path}:{line}@{}", tag(intro));
        let removed = span.map(|s| intro + s);
        CommentLifetime {
            key,
            first_line: line,
            introduced_index: intro,
            introduced_tag: tag(intro),
            removed_index: removed,
            removed_tag: removed.map(tag),
            censored: removed.is_none(),
            lifetime: span.unwrap_or(tail),
            matches: matches(spans, SourceKind::Comment, &doc),
            first_path: path,
        }
    }
}

prop_compose! {
    fn issue_row()(github in any::<bool>(), n in 1u32..100_000, title in text(), body in text(),
                   state in "[a-z ]{0,10}", created in any::<i32>(),
                   labels in proptest::collection::vec(text(), 0..3), spans in spans()) -> IssueRow {
        let issue = IssueRecord {
            source: if github { IssueSource::Github } else { IssueSource::Jira },
            external_id: if github { n.to_string() } else { format!("SEC-{n}") },
            title,
            body,
            state,
            created_at: created as i64,
            labels,
        };
        IssueRow { matches: matches(spans, SourceKind::Issue, &issue.document_id()), issue }
    }
}

proptest! {
    #[test]
    fn commits_round_trip(rows in proptest::collection::vec(commit_row(), 0..6)) {
        let m = meta("commits");
        let (m2, back): (_, Vec<CommitRow>) = read_csv(&write_csv(&m, &rows)).unwrap();
        prop_assert_eq!(&m2, &m);
        prop_assert_eq!(&back, &rows);
        let (_, back): (_, Vec<CommitRow>) = read_jsonl(&write_jsonl(&m, &rows), "commits").unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn lifetimes_round_trip(rows in proptest::collection::vec(lifetime(), 0..6)) {
        let m = meta("comment_lifetimes");
        let (_, back): (_, Vec<CommentLifetime>) = read_csv(&write_csv(&m, &rows)).unwrap();
        prop_assert_eq!(&back, &rows);
        let (_, back): (_, Vec<CommentLifetime>) = read_jsonl(&write_jsonl(&m, &rows), "comment_lifetimes").unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn issues_round_trip(rows in proptest::collection::vec(issue_row(), 0..6)) {
        let m = meta("issues");
        let (_, back): (_, Vec<IssueRow>) = read_csv(&write_csv(&m, &rows)).unwrap();
        prop_assert_eq!(&back, &rows);
        let (_, back): (_, Vec<IssueRow>) = read_jsonl(&write_jsonl(&m, &rows), "issues").unwrap();
        prop_assert_eq!(back, rows);
    }
}

#[test]
fn csv_rows_end_with_crlf_and_kind_is_checked() {
    let rows: Vec<CommitRow> = Vec::new();
    let bytes = write_csv(&meta("commits"), &rows);
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("#{"));
    assert!(text.lines().nth(1).unwrap().starts_with("commit_id,"));
    assert!(text.ends_with("\r\n"));
    let jsonl = write_jsonl(&meta("commits"), &rows);
    assert!(read_jsonl::<CommitRow>(&jsonl, "issues").is_err());
}
