//! Read-only access to a git repository: release tags, file snapshots,
//! commit history and issue references in commit messages.
//!
//! Everything goes through the object database. The working tree, the index
//! and the refs are never touched.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use git2::{ObjectType, Oid, Repository, Sort, TreeWalkMode, TreeWalkResult};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("{path} is not a git repository: {message}")]
    NotARepository { path: PathBuf, message: String },
    #[error("unknown revision {0:?}")]
    UnknownRevision(String),
    #[error("unreadable object at {path}: {message}")]
    UnreadableObject { path: String, message: String },
    #[error(transparent)]
    Git(#[from] git2::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseTag {
    pub name: String,
    pub commit_id: String,
    /// Committer time of the tagged commit, UTC seconds.
    pub timestamp: i64,
    pub order_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTag {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueRefKind {
    Numeric,
    ProjectKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IssueRef {
    pub kind: IssueRefKind,
    pub value: String,
}

impl IssueRef {
    pub fn numeric(value: impl Into<String>) -> Self {
        Self {
            kind: IssueRefKind::Numeric,
            value: value.into(),
        }
    }

    pub fn project_key(value: impl Into<String>) -> Self {
        Self {
            kind: IssueRefKind::ProjectKey,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    pub message: String,
    pub author_time: i64,
    pub issue_refs: Vec<IssueRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileBlob {
    pub path: String,
    pub content: Vec<u8>,
}

/// A read-only handle on one repository.
pub struct RepoMiner {
    repo: Repository,
}

impl RepoMiner {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, RepoError> {
        let path = path.as_ref();
        let repo = Repository::open(path).map_err(|e| RepoError::NotARepository {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        Ok(Self { repo })
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    /// Tags resolvable to commits, ordered by tagged-commit time and then by
    /// name. Tags pointing at trees or blobs are reported in the second list.
    pub fn scan_release_tags(&self) -> Result<(Vec<ReleaseTag>, Vec<SkippedTag>), RepoError> {
        let mut tags = Vec::new();
        let mut skipped = Vec::new();
        let names = self.repo.tag_names(None)?;
        for name in names.iter().flatten() {
            let resolved = self
                .repo
                .find_reference(&format!("refs/tags/{name}"))
                .and_then(|r| r.peel(ObjectType::Commit))
                .and_then(|o| o.peel_to_commit());
            match resolved {
                Ok(commit) => tags.push(ReleaseTag {
                    name: name.to_string(),
                    commit_id: commit.id().to_string(),
                    timestamp: commit.time().seconds(),
                    order_index: 0,
                }),
                Err(e) => {
                    tracing::warn!(tag = name, "skipping tag: {}", e.message());
                    skipped.push(SkippedTag {
                        name: name.to_string(),
                        reason: e.message().to_string(),
                    });
                }
            }
        }
        tags.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.name.cmp(&b.name)));
        for (i, t) in tags.iter_mut().enumerate() {
            t.order_index = i;
        }
        Ok((tags, skipped))
    }

    pub fn list_release_tags(&self) -> Result<Vec<ReleaseTag>, RepoError> {
        self.scan_release_tags().map(|(tags, _)| tags)
    }

    pub fn resolve_commit(&self, rev: &str) -> Result<Oid, RepoError> {
        self.repo
            .revparse_single(rev)
            .and_then(|o| o.peel_to_commit())
            .map(|c| c.id())
            .map_err(|_| RepoError::UnknownRevision(rev.to_string()))
    }

    /// Paths of every blob in the tree of `rev` accepted by `filter`, sorted.
    pub fn tree_paths(
        &self,
        rev: &str,
        filter: impl Fn(&str) -> bool,
    ) -> Result<Vec<(String, Oid)>, RepoError> {
        let oid = self.resolve_commit(rev)?;
        let tree = self.repo.find_commit(oid)?.tree()?;
        let mut entries = Vec::new();
        tree.walk(TreeWalkMode::PreOrder, |dir, entry| {
            if entry.kind() == Some(ObjectType::Blob) {
                if let Some(name) = entry.name() {
                    let path = format!("{dir}{name}");
                    if is_contained(&path) && filter(&path) {
                        entries.push((path, entry.id()));
                    }
                }
            }
            TreeWalkResult::Ok
        })?;
        entries.sort();
        Ok(entries)
    }

    /// Streams the files of a tag's tree that pass `filter`. Per-file read
    /// failures are yielded as errors and the stream continues.
    pub fn snapshot_files(
        &self,
        tag: &ReleaseTag,
        filter: impl Fn(&str) -> bool,
    ) -> Result<Snapshot<'_>, RepoError> {
        let entries = self.tree_paths(&tag.commit_id, filter)?;
        Ok(Snapshot {
            repo: &self.repo,
            entries: entries.into_iter(),
        })
    }

    /// Content of `path` at `rev`, `None` when the path does not exist there.
    pub fn read_file(&self, rev: &str, path: &str) -> Result<Option<Vec<u8>>, RepoError> {
        let oid = self.resolve_commit(rev)?;
        let tree = self.repo.find_commit(oid)?.tree()?;
        let entry = match tree.get_path(Path::new(path)) {
            Ok(e) => e,
            Err(e) if e.code() == git2::ErrorCode::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        if entry.kind() != Some(ObjectType::Blob) {
            return Ok(None);
        }
        let blob = self.repo.find_blob(entry.id())?;
        Ok(Some(blob.content().to_vec()))
    }

    /// Paths that differ between the trees of `base` and `head`, sorted.
    pub fn changed_paths(&self, base: &str, head: &str) -> Result<Vec<String>, RepoError> {
        let base_tree = self.repo.find_commit(self.resolve_commit(base)?)?.tree()?;
        let head_tree = self.repo.find_commit(self.resolve_commit(head)?)?.tree()?;
        let diff = self
            .repo
            .diff_tree_to_tree(Some(&base_tree), Some(&head_tree), None)?;
        let mut paths = Vec::new();
        for delta in diff.deltas() {
            for file in [delta.old_file(), delta.new_file()] {
                if let Some(p) = file.path().and_then(Path::to_str) {
                    paths.push(p.to_string());
                }
            }
        }
        paths.sort();
        paths.dedup();
        Ok(paths)
    }

    /// Whole history reachable from HEAD, oldest first. Merge commits appear
    /// once. An unborn HEAD yields no commits.
    pub fn list_commits(&self) -> Result<Vec<CommitRecord>, RepoError> {
        let mut walk = self.repo.revwalk()?;
        walk.set_sorting(Sort::TOPOLOGICAL | Sort::TIME | Sort::REVERSE)?;
        match walk.push_head() {
            Ok(()) => {}
            Err(e)
                if matches!(
                    e.code(),
                    git2::ErrorCode::UnbornBranch | git2::ErrorCode::NotFound
                ) =>
            {
                return Ok(Vec::new())
            }
            Err(e) => return Err(e.into()),
        }
        let mut out = Vec::new();
        for oid in walk {
            let commit = self.repo.find_commit(oid?)?;
            let message = String::from_utf8_lossy(commit.message_bytes()).into_owned();
            out.push(CommitRecord {
                commit_id: commit.id().to_string(),
                issue_refs: link_issues_in_message(&message),
                message,
                author_time: commit.author().when().seconds(),
            });
        }
        Ok(out)
    }

    /// Name of the branch HEAD points at, if any.
    pub fn head_branch(&self) -> Option<String> {
        self.repo
            .find_reference("HEAD")
            .ok()
            .and_then(|r| r.symbolic_target().map(str::to_string))
    }
}

fn is_contained(path: &str) -> bool {
    !path.starts_with('/') && path.split('/').all(|c| !c.is_empty() && c != ".." && c != ".")
}

pub struct Snapshot<'r> {
    repo: &'r Repository,
    entries: std::vec::IntoIter<(String, Oid)>,
}

impl Iterator for Snapshot<'_> {
    type Item = Result<FileBlob, RepoError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (path, oid) = self.entries.next()?;
        Some(match self.repo.find_blob(oid) {
            Ok(blob) => Ok(FileBlob {
                content: blob.content().to_vec(),
                path,
            }),
            Err(e) => Err(RepoError::UnreadableObject {
                path,
                message: e.message().to_string(),
            }),
        })
    }
}

pub fn list_release_tags(repo: impl AsRef<Path>) -> Result<Vec<ReleaseTag>, RepoError> {
    RepoMiner::open(repo)?.list_release_tags()
}

pub fn list_commits(repo: impl AsRef<Path>) -> Result<Vec<CommitRecord>, RepoError> {
    RepoMiner::open(repo)?.list_commits()
}

/// Issue references in a commit message: `#<digits>` and
/// `<KEY>-<digits>` with a 2 to 10 letter uppercase key, both on word
/// boundaries. Order of first appearance, duplicates dropped.
pub fn link_issues_in_message(message: &str) -> Vec<IssueRef> {
    let chars: Vec<char> = message.chars().collect();
    let boundary_before = |i: usize| i == 0 || !chars[i - 1].is_alphanumeric();
    let boundary_after = |i: usize| i >= chars.len() || !chars[i].is_alphanumeric();
    let digits_from = |i: usize| {
        let mut j = i;
        while j < chars.len() && chars[j].is_ascii_digit() {
            j += 1;
        }
        j
    };

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' && boundary_before(i) {
            let end = digits_from(i + 1);
            if end > i + 1 && boundary_after(end) {
                let digits: String = chars[i + 1..end].iter().collect();
                let trimmed = digits.trim_start_matches('0');
                if !trimmed.is_empty() {
                    let r = IssueRef::numeric(trimmed);
                    if seen.insert(r.clone()) {
                        out.push(r);
                    }
                }
                i = end;
                continue;
            }
        } else if c.is_ascii_uppercase() && boundary_before(i) {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_uppercase() {
                j += 1;
            }
            let key_len = j - i;
            if (2..=10).contains(&key_len) && chars.get(j) == Some(&'-') {
                let end = digits_from(j + 1);
                if end > j + 1 && boundary_after(end) {
                    let r = IssueRef::project_key(chars[i..end].iter().collect::<String>());
                    if seen.insert(r.clone()) {
                        out.push(r);
                    }
                    i = end;
                    continue;
                }
            }
            i = j;
            continue;
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_reference() {
        assert_eq!(
            link_issues_in_message("Fix minor bug in LDAP aliases #2"),
            [IssueRef::numeric("2")]
        );
    }

    #[test]
    fn no_reference() {
        assert!(link_issues_in_message("refactor only").is_empty());
        assert!(link_issues_in_message("").is_empty());
    }

    #[test]
    fn mixed_and_deduplicated() {
        assert_eq!(
            link_issues_in_message("GLPI-12 closes #7 and #7"),
            [IssueRef::project_key("GLPI-12"), IssueRef::numeric("7")]
        );
    }

    #[test]
    fn boundaries_and_shapes() {
        assert!(link_issues_in_message("abc#12").is_empty());
        assert!(link_issues_in_message("#12abc").is_empty());
        assert!(link_issues_in_message("#0 and #").is_empty());
        assert_eq!(link_issues_in_message("(#007)"), [IssueRef::numeric("7")]);
        assert!(link_issues_in_message("A-1 ABCDEFGHIJK-2 xGLPI-3 Glpi-4").is_empty());
        assert_eq!(
            link_issues_in_message("see ABCDEFGHIJ-20, PROJ-1."),
            [IssueRef::project_key("ABCDEFGHIJ-20"), IssueRef::project_key("PROJ-1")]
        );
    }

    #[test]
    fn containment() {
        assert!(is_contained("a/b.php"));
        assert!(!is_contained("../x"));
        assert!(!is_contained("/etc/passwd"));
        assert!(!is_contained("a//b"));
    }

    #[test]
    fn open_rejects_non_repository() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            RepoMiner::open(dir.path()),
            Err(RepoError::NotARepository { .. })
        ));
    }
}
