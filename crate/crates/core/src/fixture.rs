//! Deterministic scripted git repositories.
//!
//! Commits are written straight into the object database with fixed
//! signatures and timestamps, so the same script always produces the same
//! commit ids. Used by the test suites and by `secmine demo`.

use std::collections::BTreeMap;
use std::path::Path;

use git2::{Oid, Repository, Signature, Time};
use serde_json::{json, Value};

use crate::issues::transport::{ExchangeRecord, ReplayTransport};
use crate::issues::{GithubClient, JiraClient};

pub const FIXTURE_AUTHOR: &str = "Fixture Author";
pub const FIXTURE_EMAIL: &str = "fixture@example.invalid";

/// Builds commits from an in-memory file map. The working tree is left
/// empty.
pub struct FixtureRepo {
    repo: Repository,
    files: BTreeMap<String, Vec<u8>>,
    head: Option<Oid>,
}

impl FixtureRepo {
    /// Creates a fresh repository whose HEAD points at `refs/heads/main`.
    pub fn init(path: &Path) -> Result<Self, git2::Error> {
        let repo = Repository::init(path)?;
        repo.set_head("refs/heads/main")?;
        Ok(Self {
            repo,
            files: BTreeMap::new(),
            head: None,
        })
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    pub fn head(&self) -> Option<Oid> {
        self.head
    }

    pub fn write(&mut self, path: &str, content: impl AsRef<[u8]>) -> &mut Self {
        self.files.insert(path.to_string(), content.as_ref().to_vec());
        self
    }

    pub fn remove(&mut self, path: &str) -> &mut Self {
        self.files.remove(path);
        self
    }

    pub fn rename(&mut self, from: &str, to: &str) -> &mut Self {
        if let Some(c) = self.files.remove(from) {
            self.files.insert(to.to_string(), c);
        }
        self
    }

    pub fn set_files(&mut self, files: BTreeMap<String, Vec<u8>>) -> &mut Self {
        self.files = files;
        self
    }

    pub fn files(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.files
    }

    /// Commits the current file map on `main`.
    pub fn commit(&mut self, message: &str, time: i64) -> Result<Oid, git2::Error> {
        let parents: Vec<Oid> = self.head.into_iter().collect();
        let oid = self.commit_with(Some("refs/heads/main"), &parents, message, time)?;
        self.head = Some(oid);
        Ok(oid)
    }

    /// Commits the current file map with explicit parents, optionally
    /// moving `update_ref`. Does not change the builder's notion of HEAD
    /// unless `update_ref` is `refs/heads/main`.
    pub fn commit_with(
        &mut self,
        update_ref: Option<&str>,
        parents: &[Oid],
        message: &str,
        time: i64,
    ) -> Result<Oid, git2::Error> {
        let tree_id = self.build_tree()?;
        let tree = self.repo.find_tree(tree_id)?;
        let sig = Signature::new(FIXTURE_AUTHOR, FIXTURE_EMAIL, &Time::new(time, 0))?;
        let parent_commits = parents
            .iter()
            .map(|p| self.repo.find_commit(*p))
            .collect::<Result<Vec<_>, _>>()?;
        let parent_refs: Vec<&git2::Commit<'_>> = parent_commits.iter().collect();
        let oid = match update_ref {
            // git2 refuses to update a ref whose current target is not the
            // first parent, so move the ref by hand afterwards.
            Some(r) => {
                let oid = self.repo.commit(None, &sig, &sig, message, &tree, &parent_refs)?;
                self.repo.reference(r, oid, true, message)?;
                oid
            }
            None => self.repo.commit(None, &sig, &sig, message, &tree, &parent_refs)?,
        };
        if update_ref == Some("refs/heads/main") {
            self.head = Some(oid);
        }
        Ok(oid)
    }

    pub fn tag(&self, name: &str, target: Oid) -> Result<(), git2::Error> {
        let obj = self.repo.find_object(target, None)?;
        self.repo.tag_lightweight(name, &obj, false)?;
        Ok(())
    }

    pub fn annotated_tag(&self, name: &str, target: Oid, time: i64) -> Result<(), git2::Error> {
        let obj = self.repo.find_object(target, None)?;
        let sig = Signature::new(FIXTURE_AUTHOR, FIXTURE_EMAIL, &Time::new(time, 0))?;
        self.repo.tag(name, &obj, &sig, name, false)?;
        Ok(())
    }

    /// Tags the tree of the current file map, producing a tag that does not
    /// resolve to a commit.
    pub fn tag_tree(&self, name: &str) -> Result<(), git2::Error> {
        let tree_id = self.build_tree()?;
        self.tag(name, tree_id)
    }

    fn build_tree(&self) -> Result<Oid, git2::Error> {
        let mut root = Dir::default();
        for (path, content) in &self.files {
            let mut node = &mut root;
            let mut parts: Vec<&str> = path.split('/').collect();
            let file = parts.pop().expect("non-empty path");
            for part in parts {
                node = node.dirs.entry(part.to_string()).or_default();
            }
            node.files.insert(file.to_string(), content.clone());
        }
        root.write(&self.repo)
    }
}

#[derive(Default)]
struct Dir {
    dirs: BTreeMap<String, Dir>,
    files: BTreeMap<String, Vec<u8>>,
}

impl Dir {
    fn write(&self, repo: &Repository) -> Result<Oid, git2::Error> {
        let mut builder = repo.treebuilder(None)?;
        for (name, content) in &self.files {
            let oid = repo.blob(content)?;
            builder.insert(name, oid, 0o100644)?;
        }
        for (name, dir) in &self.dirs {
            let oid = dir.write(repo)?;
            builder.insert(name, oid, 0o040000)?;
        }
        builder.write()
    }
}

/// Base time of the demo repository: 2020-01-01T00:00:00Z.
pub const DEMO_EPOCH: i64 = 1_577_836_800;
const DAY: i64 = 86_400;

/// Builds the small demonstration project used by the golden pipeline test
/// and `secmine demo`: five release tags, a file move, a removed and
/// reintroduced comment, and commit messages with issue references.
pub fn build_demo_repo(path: &Path) -> Result<FixtureRepo, git2::Error> {
    let mut r = FixtureRepo::init(path)?;
    let t = |day: i64| DEMO_EPOCH + day * DAY;

    r.write(
        "src/auth.php",
        "<?php\n// TODO: check xss in login form\nfunction login($user) {\n    $q = \"// not a comment: xss\";\n    /* hack for ldap login */\n    return ldap_bind($user);\n}\n",
    )
    .write("src/util.js", "// signature widget\nexport const x = 1;\n")
    .write("README.md", "# demo\n\npassword handling is documented elsewhere\n");
    let c1 = r.commit("Initial import", t(0))?;
    r.tag("v1.0", c1)?;

    r.write(
        "src/session.php",
        "<?php\n# session handling\n/*\n * Two factor\n * authentication pending\n */\nfunction session() {}\n",
    );
    r.commit("Add session handling for two factor auth #3", t(10))?;
    r.write(
        "src/auth.php",
        "<?php\n// TODO: check xss in login form\nfunction login($user) {\n    $q = \"// not a comment: xss\";\n    return ldap_bind($user);\n}\n",
    );
    let c3 = r.commit("Fix minor bug in LDAP aliases #2", t(20))?;
    r.annotated_tag("v1.1", c3, t(21))?;

    r.write("src/util.js", "export const x = 1;\n");
    r.commit("Remove signature widget, closes DEMO-4", t(30))?;
    r.write(
        "src/auth.php",
        "<?php\nfunction login($user) {\n    $q = \"// not a comment: xss\";\n    return ldap_bind($user);\n}\n",
    );
    let c5 = r.commit("fix search engine for XSS", t(40))?;
    r.tag("v1.2", c5)?;

    r.rename("src/session.php", "lib/session.php");
    r.commit("Move session code", t(50))?;
    r.write(
        "src/auth.php",
        "<?php\n// TODO: check xss in login form\nfunction login($user) {\n    $q = \"// not a comment: xss\";\n    return ldap_bind($user);\n}\n",
    );
    let c7 = r.commit("Restore xss reminder", t(60))?;
    r.tag("v2.0", c7)?;

    r.write(
        "lib/password.php",
        "<?php\n// password reset uses user account email #5\nfunction reset_password() {}\n",
    );
    r.commit("Add password reset for user account", t(70))?;
    r.write("README.md", "# demo\n\nsee docs\n");
    let c9 = r.commit("Update readme", t(71))?;
    r.tag("v2.1", c9)?;

    Ok(r)
}

/// Replay records serving `issues` as GitHub issue-list pages of
/// `per_page`, linked with `rel="next"` headers.
pub fn github_pages(api_base: &str, slug: &str, per_page: u32, issues: &[Value]) -> Vec<ExchangeRecord> {
    let client = GithubClient::new(ReplayTransport::from_records([]))
        .with_api_base(api_base)
        .with_per_page(per_page);
    let chunks: Vec<&[Value]> = if issues.is_empty() {
        vec![&[]]
    } else {
        issues.chunks(per_page as usize).collect()
    };
    let pages = chunks.len();
    chunks
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| {
            let page = i as u32 + 1;
            let mut headers = BTreeMap::new();
            if (i + 1) < pages {
                headers.insert(
                    "link".to_string(),
                    format!("<{}>; rel=\"next\"", client.issues_url(slug, page + 1)),
                );
            }
            ExchangeRecord {
                method: "GET".into(),
                url: client.issues_url(slug, page),
                status: 200,
                headers,
                body: Value::Array(chunk.to_vec()).to_string(),
            }
        })
        .collect()
}

/// Replay records serving `issues` as JIRA search pages of `page_size`.
pub fn jira_pages(endpoint: &str, jql: &str, page_size: u32, issues: &[Value]) -> Vec<ExchangeRecord> {
    let client = JiraClient::new(ReplayTransport::from_records([]), endpoint)
        .expect("valid endpoint")
        .with_page_size(page_size);
    let total = issues.len();
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let chunk = &issues[start..(start + page_size as usize).min(total)];
        out.push(ExchangeRecord {
            method: "GET".into(),
            url: client.search_url(jql, start as u64),
            status: 200,
            headers: BTreeMap::new(),
            body: json!({
                "startAt": start,
                "maxResults": page_size,
                "total": total,
                "issues": chunk,
            })
            .to_string(),
        });
        start += chunk.len();
        if chunk.is_empty() || start >= total {
            return out;
        }
    }
}

pub fn github_issue_json(number: u64, title: &str, body: &str, created_at: &str) -> Value {
    json!({
        "number": number,
        "title": title,
        "body": body,
        "state": "open",
        "created_at": created_at,
        "labels": [],
    })
}

pub fn jira_issue_json(key: &str, summary: &str, description: &str, created: &str) -> Value {
    json!({
        "key": key,
        "fields": {
            "summary": summary,
            "description": description,
            "status": { "name": "Open" },
            "created": created,
            "labels": [],
        },
    })
}

pub const DEMO_GITHUB_API: &str = "https://api.github.invalid";
pub const DEMO_SLUG: &str = "demo/webapp";
pub const DEMO_JIRA: &str = "https://jira.example.invalid";
pub const DEMO_JQL: &str = "project = DEMO ORDER BY created ASC";

pub fn demo_github_exchanges() -> Vec<ExchangeRecord> {
    let mut pr = github_issue_json(4, "Bump ldap dependency", "", "2020-01-25T09:00:00Z");
    pr["pull_request"] = json!({ "url": "https://example.invalid/pr/4" });
    let issues = [
        github_issue_json(1, "Crash on startup", "Stack trace attached.", "2020-01-02T10:00:00Z"),
        github_issue_json(2, "LDAP login fails for aliases", "Users with aliases cannot log in.", "2020-01-15T08:30:00Z"),
        github_issue_json(3, "Add two factor authentication", "Support TOTP as a second factor.", "2020-01-10T12:00:00Z"),
        pr,
        github_issue_json(5, "Password reset e-mail", "The password reset link expires too early.", "2020-03-10T16:45:00Z"),
    ];
    github_pages(DEMO_GITHUB_API, DEMO_SLUG, 2, &issues)
}

pub fn demo_jira_exchanges() -> Vec<ExchangeRecord> {
    let issues = [
        jira_issue_json("DEMO-1", "Reflected XSS in search", "The search field echoes input.", "2020-01-20T11:00:00.000+0000"),
        jira_issue_json("DEMO-2", "Typo in footer", "", "2020-01-21T11:00:00.000+0000"),
        jira_issue_json("DEMO-3", "Session fixation", "Regenerate the session id after authentication.", "2020-02-01T09:15:00.000+0100"),
        jira_issue_json("DEMO-4", "Remove signature widget", "Unused widget.", "2020-02-02T10:00:00.000+0000"),
    ];
    jira_pages(DEMO_JIRA, DEMO_JQL, 2, &issues)
}

pub fn exchanges_jsonl(records: &[ExchangeRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub const DEMO_CONFIG: &str = r#"project = "demo"
repository = "repo"
output = "runs/demo"

[sampling]
seed = 2024

[issues.github]
slug = "demo/webapp"
api_base = "https://api.github.invalid"
replay = "github.jsonl"
per_page = 2

[issues.jira]
endpoint = "https://jira.example.invalid"
jql = "project = DEMO ORDER BY created ASC"
replay = "jira.jsonl"
page_size = 2
"#;

/// Writes a runnable demo project into `dir`: the demo repository under
/// `repo/`, replay files for both issue trackers and `secmine.toml`.
/// Returns the config path.
pub fn write_demo_project(dir: &Path) -> std::io::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    build_demo_repo(&dir.join("repo")).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("github.jsonl"), exchanges_jsonl(&demo_github_exchanges()))?;
    std::fs::write(dir.join("jira.jsonl"), exchanges_jsonl(&demo_jira_exchanges()))?;
    let config = dir.join("secmine.toml");
    std::fs::write(&config, DEMO_CONFIG)?;
    Ok(config)
}
