use std::path::Path;
use std::sync::Arc;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use secmine::lexicon::{IndicatorMatch, Lexicon, SourceKind};
use secmine::report::datasets::{write_jsonl, ArtifactMeta};
use secmine::sampler::SampleTask;
use secmine::triage::{load_sample, serve_listener, LabelStore, Triage, TOKEN_HEADER};

fn task(i: usize) -> SampleTask {
    let payload = format!("// TODO xss in login form {i}");
    let at = |p: &str| payload.find(p).unwrap();
    let m = |p: &str| IndicatorMatch {
        phrase: p.into(),
        source_kind: SourceKind::Comment,
        start: at(p),
        end: at(p) + p.len(),
        document_id: format!("t{i}"),
    };
    SampleTask {
        task_id: format!("comment:a.php:{i}@v1"),
        source_kind: SourceKind::Comment,
        stratum: "p/comment".into(),
        matches: vec![m("xss"), m("login")],
        payload,
    }
}

fn write_sample(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("sample_tasks.jsonl");
    let tasks: Vec<SampleTask> = (0..5).map(task).collect();
    std::fs::write(&path, write_jsonl(&ArtifactMeta::new("sample_tasks", "abc", "1.0.0"), &tasks)).unwrap();
    path
}

/// A running service; dropping it stops the server.
struct Server {
    base: String,
    _runtime: tokio::runtime::Runtime,
}

fn start(dir: &Path, token: Option<&str>, other: Option<Vec<String>>, static_dir: Option<&Path>) -> Server {
    let tasks = load_sample(&dir.join("sample_tasks.jsonl")).unwrap();
    let store = LabelStore::open(dir.join("labels.jsonl")).unwrap();
    let state = Arc::new(Triage::new(tasks, store, Lexicon::default_lexicon(), other, token.map(String::from)).unwrap());
    let app = state.router(static_dir);
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    runtime.spawn(serve_listener(listener, app, std::future::pending()));
    Server { base, _runtime: runtime }
}

fn get(client: &Client, url: String) -> Value {
    let resp = client.get(url).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    serde_json::from_str(&resp.text().unwrap()).unwrap()
}

trait JsonBody {
    fn json_body(self, body: &Value) -> Self;
}

impl JsonBody for reqwest::blocking::RequestBuilder {
    fn json_body(self, body: &Value) -> Self {
        self.header(reqwest::header::CONTENT_TYPE, "application/json").body(body.to_string())
    }
}

#[test]
fn labeling_flow_persists_across_restarts() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path());
    let client = Client::new();
    let first_id = task(0).task_id;
    {
        let s = start(dir.path(), None, Some(vec!["XSS".into()]), None);
        let list = get(&client, format!("{}/api/tasks?status=pending", s.base));
        assert_eq!((list["total"].as_u64(), list["pending"].as_u64()), (Some(5), Some(5)));
        assert_eq!(list["tasks"][0]["status"], "pending");

        let resp = client
            .post(format!("{}/api/labels", s.base))
            .json_body(&json!({"task_id": first_id, "rater": "ann", "verdict": "irrelevant", "labeled_at": 1}))
            .send()
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
        let body: Value = serde_json::from_str(&resp.text().unwrap()).unwrap();
        assert_eq!((body["acknowledged"].as_bool(), body["pending"].as_u64()), (Some(true), Some(4)));

        let resp = client
            .post(format!("{}/api/labels", s.base))
            .json_body(&json!({"task_id": first_id, "rater": "ann", "verdict": "relevant", "labeled_at": 2}))
            .send()
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
    }

    let s = start(dir.path(), None, Some(vec!["XSS".into()]), None);
    let list = get(&client, format!("{}/api/tasks?status=pending", s.base));
    assert_eq!(list["total"].as_u64(), Some(4));
    let done = get(&client, format!("{}/api/tasks/{}", s.base, first_id));
    assert_eq!(done["status"], "done");
    assert_eq!(done["labels"].as_array().unwrap().len(), 1, "superseded label is hidden");
    assert_eq!(done["labels"][0]["verdict"], "relevant");

    let stats = get(&client, format!("{}/api/stats", s.base));
    assert_eq!(stats["labels_recorded"], 2);
    assert_eq!(stats["labeled"], 1);
    // Relevant phrases {login, xss} against {xss}.
    assert_eq!(stats["agreement"]["overlap_pct"], 50.0);

    let export = client.get(format!("{}/api/export", s.base)).send().unwrap().text().unwrap();
    assert_eq!(export.lines().count(), 2);
}

#[test]
fn rejects_bad_labels() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path());
    let s = start(dir.path(), None, None, None);
    let client = Client::new();
    let post = |body: Value| client.post(format!("{}/api/labels", s.base)).json_body(&body).send().unwrap().status();
    let id = task(1).task_id;
    assert_eq!(post(json!({"task_id": "nope", "rater": "a", "verdict": "relevant"})), StatusCode::NOT_FOUND);
    assert_eq!(post(json!({"task_id": id, "rater": " ", "verdict": "relevant"})), StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        post(json!({"task_id": id, "rater": "a", "verdict": "relevant", "phrase_verdicts": {"ldap": "relevant"}})),
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(post(json!({"task_id": id, "rater": "a", "verdict": "maybe"})), StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        client.get(format!("{}/api/tasks/nope", s.base)).send().unwrap().status(),
        StatusCode::NOT_FOUND
    );
    assert_eq!(get(&client, format!("{}/api/stats", s.base))["labels_recorded"], 0);
}

#[test]
fn token_guards_the_api_but_not_static_files() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path());
    let web = dir.path().join("web");
    std::fs::create_dir(&web).unwrap();
    std::fs::write(web.join("index.html"), "<h1>triage</h1>").unwrap();
    let s = start(dir.path(), Some("t0ken"), None, Some(&web));
    let client = Client::new();
    let url = format!("{}/api/tasks", s.base);
    assert_eq!(client.get(&url).send().unwrap().status(), StatusCode::UNAUTHORIZED);
    assert_eq!(client.get(&url).header(TOKEN_HEADER, "wrong").send().unwrap().status(), StatusCode::UNAUTHORIZED);
    assert_eq!(client.get(&url).header(TOKEN_HEADER, "t0ken").send().unwrap().status(), StatusCode::OK);
    let page = client.get(format!("{}/index.html", s.base)).send().unwrap();
    assert_eq!(page.status(), StatusCode::OK);
    assert_eq!(page.text().unwrap(), "<h1>triage</h1>");
}

#[test]
fn pagination_and_limits() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path());
    let s = start(dir.path(), None, None, None);
    let client = Client::new();
    let page = get(&client, format!("{}/api/tasks?offset=3&limit=10", s.base));
    assert_eq!(page["tasks"].as_array().unwrap().len(), 2);
    assert_eq!(page["tasks"][0]["task_id"], task(3).task_id);
    assert_eq!(get(&client, format!("{}/api/tasks?limit=100000", s.base))["limit"], 500);
}
