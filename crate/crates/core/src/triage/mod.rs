//! HTTP service for labeling sampled tasks.
//!
//! | method | path              | purpose                                     |
//! |--------|-------------------|---------------------------------------------|
//! | GET    | `/api/tasks`      | `?status=pending\|done&offset=&limit=`      |
//! | GET    | `/api/tasks/{id}` | one task with its current labels            |
//! | POST   | `/api/labels`     | record one label                            |
//! | GET    | `/api/stats`      | relevance summary, progress, agreement      |
//! | GET    | `/api/export`     | every label ever recorded, one per line     |
//!
//! When a token is configured every `/api` request must carry it in the
//! `x-triage-token` header. Anything outside `/api` is served from the
//! optional static directory.

pub mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::lexicon::{Lexicon, RelevanceSummary, Verdict};
use crate::report::datasets::{read_jsonl, DatasetError};
use crate::sampler::SampleTask;
pub use store::{agreement, compute_agreement, AgreementReport, Label, LabelStore, StoreError};

pub const TOKEN_HEADER: &str = "x-triage-token";
const DEFAULT_PAGE: usize = 50;
const MAX_PAGE: usize = 500;

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("cannot read sample {path}: {message}")]
    Sample { path: PathBuf, message: String },
    #[error("duplicate task id {0:?} in sample")]
    DuplicateTask(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Serve(std::io::Error),
}

pub struct ServeOptions {
    pub sample: PathBuf,
    pub store: PathBuf,
    pub bind: SocketAddr,
    pub lexicon: Lexicon,
    /// Relevant phrases of an external study to compare against.
    pub other_relevant: Option<Vec<String>>,
    pub token: Option<String>,
    pub static_dir: Option<PathBuf>,
}

/// Shared service state.
pub struct Triage {
    tasks: Vec<SampleTask>,
    index: HashMap<String, usize>,
    store: Mutex<LabelStore>,
    lexicon: Lexicon,
    other_relevant: Option<Vec<String>>,
    token: Option<String>,
}

pub fn load_sample(path: &Path) -> Result<Vec<SampleTask>, TriageError> {
    let err = |message: String| TriageError::Sample {
        path: path.to_path_buf(),
        message,
    };
    let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
    read_jsonl::<SampleTask>(&bytes, "sample_tasks")
        .or_else(|e| match e {
            DatasetError::WrongKind { .. } => read_jsonl(&bytes, "candidates"),
            e => Err(e),
        })
        .map(|(_, tasks)| tasks)
        .map_err(|e| err(e.to_string()))
}

impl Triage {
    pub fn new(
        tasks: Vec<SampleTask>,
        store: LabelStore,
        lexicon: Lexicon,
        other_relevant: Option<Vec<String>>,
        token: Option<String>,
    ) -> Result<Self, TriageError> {
        let mut index = HashMap::new();
        for (i, t) in tasks.iter().enumerate() {
            if index.insert(t.task_id.clone(), i).is_some() {
                return Err(TriageError::DuplicateTask(t.task_id.clone()));
            }
        }
        Ok(Self {
            tasks,
            index,
            store: Mutex::new(store),
            lexicon,
            other_relevant,
            token: token.filter(|t| !t.is_empty()),
        })
    }

    pub fn open(options: &ServeOptions) -> Result<Self, TriageError> {
        let tasks = load_sample(&options.sample)?;
        let store = LabelStore::open(&options.store)?;
        Self::new(
            tasks,
            store,
            options.lexicon.clone(),
            options.other_relevant.clone(),
            options.token.clone(),
        )
    }

    fn task_map(&self) -> HashMap<&str, &SampleTask> {
        self.tasks.iter().map(|t| (t.task_id.as_str(), t)).collect()
    }

    fn labeled_ids(labels: &[Label]) -> HashSet<&str> {
        labels.iter().map(|l| l.task_id.as_str()).collect()
    }

    /// Validates and durably records a label.
    pub fn record_label(&self, label: Label) -> Result<Stats, ApiError> {
        let task = self
            .index
            .get(&label.task_id)
            .map(|&i| &self.tasks[i])
            .ok_or_else(|| ApiError::not_found(format!("unknown task {:?}", label.task_id)))?;
        if label.rater.trim().is_empty() {
            return Err(ApiError::unprocessable("rater must not be empty"));
        }
        let phrases: HashSet<&str> = task.matches.iter().map(|m| m.phrase.as_str()).collect();
        if let Some(bad) = label.phrase_verdicts.keys().find(|p| !phrases.contains(p.as_str())) {
            return Err(ApiError::unprocessable(format!(
                "phrase {bad:?} is not matched in task {:?}",
                label.task_id
            )));
        }
        let mut store = self.store.lock().expect("store lock poisoned");
        store
            .append(label)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok(self.stats_of(store.labels()))
    }

    pub fn stats(&self) -> Stats {
        let store = self.store.lock().expect("store lock poisoned");
        self.stats_of(store.labels())
    }

    fn stats_of(&self, labels: &[Label]) -> Stats {
        let tasks = self.task_map();
        let judgments: Vec<_> = store::phrase_judgments(labels, &tasks)
            .into_iter()
            .filter(|j| self.lexicon.get(&j.phrase).is_some())
            .collect();
        let relevance = self
            .lexicon
            .relevance_summary(Some(&judgments))
            .expect("judgments are restricted to lexicon phrases");
        let labeled = Self::labeled_ids(labels).len();
        Stats {
            tasks: self.tasks.len(),
            labeled,
            pending: self.tasks.len() - labeled,
            labels_recorded: labels.len(),
            relevance,
            agreement: self
                .other_relevant
                .as_deref()
                .map(|other| compute_agreement(labels, &tasks, other)),
        }
    }

    pub fn router(self: Arc<Self>, static_dir: Option<&Path>) -> Router {
        let api = Router::new()
            .route("/api/tasks", get(list_tasks))
            .route("/api/tasks/{id}", get(get_task))
            .route("/api/labels", post(post_label))
            .route("/api/stats", get(get_stats))
            .route("/api/export", get(export))
            .route_layer(middleware::from_fn_with_state(self.clone(), check_token))
            .with_state(self);
        match static_dir {
            Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
            None => api,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub tasks: usize,
    pub labeled: usize,
    pub pending: usize,
    pub labels_recorded: usize,
    pub relevance: RelevanceSummary,
    pub agreement: Option<AgreementReport>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

async fn check_token(State(state): State<Arc<Triage>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = request.headers().get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong token").into_response();
        }
    }
    next.run(request).await
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StatusFilter {
    Pending,
    Done,
}

#[derive(Debug, Deserialize)]
struct TaskQuery {
    status: Option<StatusFilter>,
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct TaskView<'a> {
    #[serde(flatten)]
    task: &'a SampleTask,
    status: &'static str,
    labels: Vec<&'a Label>,
}

fn task_view<'a>(task: &'a SampleTask, latest: &[&'a Label]) -> TaskView<'a> {
    let labels: Vec<&Label> = latest.iter().copied().filter(|l| l.task_id == task.task_id).collect();
    TaskView {
        status: if labels.is_empty() { "pending" } else { "done" },
        task,
        labels,
    }
}

async fn list_tasks(State(state): State<Arc<Triage>>, Query(q): Query<TaskQuery>) -> Response {
    let store = state.store.lock().expect("store lock poisoned");
    let latest = store::latest_labels(store.labels());
    let labeled = Triage::labeled_ids(store.labels());
    let selected: Vec<&SampleTask> = state
        .tasks
        .iter()
        .filter(|t| match q.status {
            Some(StatusFilter::Pending) => !labeled.contains(t.task_id.as_str()),
            Some(StatusFilter::Done) => labeled.contains(t.task_id.as_str()),
            None => true,
        })
        .collect();
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let page: Vec<TaskView<'_>> = selected
        .iter()
        .skip(offset)
        .take(limit)
        .map(|t| task_view(t, &latest))
        .collect();
    Json(json!({
        "total": selected.len(),
        "offset": offset,
        "limit": limit,
        "pending": state.tasks.len() - labeled.len(),
        "done": labeled.len(),
        "tasks": page,
    }))
    .into_response()
}

async fn get_task(State(state): State<Arc<Triage>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(&i) = state.index.get(&id) else {
        return ApiError::not_found(format!("unknown task {id:?}")).into_response();
    };
    let store = state.store.lock().expect("store lock poisoned");
    let latest = store::latest_labels(store.labels());
    Json(task_view(&state.tasks[i], &latest)).into_response()
}

#[derive(Debug, Deserialize)]
struct LabelRequest {
    task_id: String,
    rater: String,
    verdict: Verdict,
    #[serde(default)]
    phrase_verdicts: BTreeMap<String, Verdict>,
    labeled_at: Option<i64>,
}

async fn post_label(
    State(state): State<Arc<Triage>>,
    body: Result<Json<LabelRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::new(e.status(), e.body_text()).into_response(),
    };
    let label = Label {
        task_id: req.task_id,
        rater: req.rater,
        verdict: req.verdict,
        phrase_verdicts: req.phrase_verdicts,
        labeled_at: req.labeled_at.unwrap_or_else(|| chrono::Utc::now().timestamp()),
    };
    let echo = label.clone();
    let state = state.clone();
    match tokio::task::spawn_blocking(move || state.record_label(label)).await {
        Ok(Ok(stats)) => (
            StatusCode::CREATED,
            Json(json!({ "acknowledged": true, "label": echo, "pending": stats.pending })),
        )
            .into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn get_stats(State(state): State<Arc<Triage>>) -> Json<Stats> {
    Json(state.stats())
}

async fn export(State(state): State<Arc<Triage>>) -> impl IntoResponse {
    let store = state.store.lock().expect("store lock poisoned");
    let mut body = String::new();
    for l in store.labels() {
        body.push_str(&serde_json::to_string(l).expect("label serializes"));
        body.push('\n');
    }
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, "application/x-ndjson".parse().expect("valid header"));
    (headers, body)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve_listener(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), TriageError> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(TriageError::Serve)
}

/// Opens the sample and store, binds, and serves until Ctrl-C.
pub fn serve(options: ServeOptions) -> Result<(), TriageError> {
    let state = Arc::new(Triage::open(&options)?);
    let app = state.router(options.static_dir.as_deref());
    let runtime = tokio::runtime::Runtime::new().map_err(TriageError::Serve)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(options.bind)
            .await
            .map_err(|source| TriageError::Bind {
                addr: options.bind,
                source,
            })?;
        tracing::info!(addr = %options.bind, "triage service listening");
        serve_listener(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}
