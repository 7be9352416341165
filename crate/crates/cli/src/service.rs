//! HTTP environment service: one validated transition per request.
//!
//! Sessions live in memory only and expire after an idle TTL. Steps on one
//! session are serialized by a per-session lock; registries are shared
//! read-only.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use graphwright::reward::{final_reward, RewardError};
use graphwright::validator::{step, update_history, History};
use graphwright::{Diagnostic, SchemaRegistry, WorkflowGraph};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::DEFAULT_SCHEMA;

pub const DEFAULT_TTL: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            code: code.to_string(),
            message: message.into(),
            status: status.as_u16(),
        }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn no_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "SessionNotFound", format!("no session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct Session {
    pub session_id: String,
    pub query: String,
    pub registry: Arc<SchemaRegistry>,
    pub graph: WorkflowGraph,
    pub history: History,
    pub step_count: usize,
    pub terminated: bool,
    pub created_at: SystemTime,
    last_used: Instant,
}

#[derive(Clone)]
pub struct AppState {
    registries: Arc<BTreeMap<String, Arc<SchemaRegistry>>>,
    sessions: Arc<Mutex<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>>,
    ttl: Duration,
}

impl AppState {
    pub fn new(registries: Vec<SchemaRegistry>, ttl: Duration) -> Self {
        let registries = registries
            .into_iter()
            .map(|r| (r.schema_id().to_string(), Arc::new(r)))
            .collect();
        AppState {
            registries: Arc::new(registries),
            sessions: Arc::default(),
            ttl,
        }
    }

    /// Bundled registries plus those in the schema directory.
    pub fn from_environment(ttl: Duration) -> anyhow::Result<Self> {
        Ok(Self::new(crate::load_all_registries()?, ttl))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn registry(&self, schema_id: &str) -> ApiResult<Arc<SchemaRegistry>> {
        self.registries
            .get(schema_id)
            .cloned()
            .ok_or_else(|| ApiError::bad_request("UnknownSchema", format!("no registry `{schema_id}`")))
    }

    fn sweep(&self) {
        let now = Instant::now();
        self.sessions.lock().unwrap().retain(|_, s| match s.try_lock() {
            Ok(s) => now.duration_since(s.last_used) < self.ttl,
            // in use, so not idle
            Err(_) => true,
        });
    }

    fn lookup(&self, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<Session>>> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::no_session(id))
    }

    /// Locks a live session, dropping it if it has been idle past the TTL.
    async fn acquire(&self, id: &str) -> ApiResult<tokio::sync::OwnedMutexGuard<Session>> {
        let guard = self.lookup(id)?.lock_owned().await;
        if guard.last_used.elapsed() >= self.ttl {
            self.sessions.lock().unwrap().remove(id);
            return Err(ApiError::no_session(id));
        }
        Ok(guard)
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("MalformedBody", e.to_string()))
}

#[derive(Deserialize)]
struct CreateSession {
    query: String,
    #[serde(default)]
    schema_id: Option<String>,
}

#[derive(Deserialize)]
struct StepRequest {
    action_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepResponse {
    pub accepted: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub graph_digest: String,
    pub step_index: usize,
    pub terminated: bool,
}

#[derive(Deserialize)]
struct ValidateRequest {
    workflow: Value,
    #[serde(default)]
    schema_id: Option<String>,
}

#[derive(Deserialize)]
struct RewardRequest {
    trace: String,
    target: Value,
    #[serde(default)]
    schema_id: Option<String>,
}

/// Schema id for a request: explicit field, then the workflow's own
/// `schema_id`, then the default.
fn schema_for(explicit: Option<&str>, workflow: &Value) -> String {
    explicit
        .or_else(|| workflow.get("schema_id").and_then(Value::as_str))
        .unwrap_or(DEFAULT_SCHEMA)
        .to_string()
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_body(&body)?;
    let registry = state.registry(req.schema_id.as_deref().unwrap_or(DEFAULT_SCHEMA))?;
    state.sweep();
    let session_id = uuid::Uuid::new_v4().to_string();
    let session = Session {
        session_id: session_id.clone(),
        query: req.query,
        registry,
        graph: WorkflowGraph::empty(),
        history: History::default(),
        step_count: 0,
        terminated: false,
        created_at: SystemTime::now(),
        last_used: Instant::now(),
    };
    state
        .sessions
        .lock()
        .unwrap()
        .insert(session_id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    tracing::debug!(%session_id, "session created");
    Ok((StatusCode::CREATED, Json(json!({ "session_id": session_id }))))
}

async fn step_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<StepResponse>> {
    let mut s = state.acquire(&id).await?;
    s.last_used = Instant::now();
    let req: StepRequest = parse_body(&body)?;
    if s.terminated {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "SessionTerminated",
            format!("session `{id}` has already stopped"),
        ));
    }
    let result = step(&s.graph, &req.action_text, &s.registry);
    s.history = update_history(&s.history, &req.action_text, &result.outcome, &result.graph, &s.registry);
    let step_index = s.step_count;
    s.step_count += 1;
    s.terminated = result.terminated;
    s.graph = result.graph;
    Ok(Json(StepResponse {
        accepted: result.outcome.accepted,
        diagnostics: result.outcome.diagnostics,
        graph_digest: s.graph.digest().to_string(),
        step_index,
        terminated: s.terminated,
    }))
}

async fn get_graph(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let mut s = state.acquire(&id).await?;
    s.last_used = Instant::now();
    Ok(Json(s.graph.to_json_value(Some(s.registry.schema_id()))))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let mut s = state.acquire(&id).await?;
    s.last_used = Instant::now();
    let created = s.created_at.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(Json(json!({
        "session_id": s.session_id,
        "query": s.query,
        "schema_id": s.registry.schema_id(),
        "step_count": s.step_count,
        "terminated": s.terminated,
        "graph_digest": s.graph.digest().to_string(),
        "created_at": created,
    })))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    match state.sessions.lock().unwrap().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::no_session(&id)),
    }
}

async fn validate(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: ValidateRequest = parse_body(&body)?;
    let registry = state.registry(&schema_for(req.schema_id.as_deref(), &req.workflow))?;
    let diagnostics = crate::commands::check_document(&req.workflow, &registry)
        .map_err(|e| ApiError::bad_request("MalformedWorkflow", e.to_string()))?;
    Ok(Json(json!({ "executable": diagnostics.is_empty(), "diagnostics": diagnostics })))
}

async fn reward(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: RewardRequest = parse_body(&body)?;
    let registry = state.registry(&schema_for(req.schema_id.as_deref(), &req.target))?;
    let target = WorkflowGraph::from_json_value(&req.target, &registry)
        .map_err(|e| ApiError::bad_request("MalformedWorkflow", e.to_string()))?;
    match final_reward(req.trace.as_bytes(), &target, &registry) {
        Ok(b) => Ok(Json(serde_json::to_value(b).expect("breakdown serializes"))),
        Err(e @ RewardError::EmptyTarget) => Err(ApiError::bad_request("EmptyTarget", e.to_string())),
    }
}

async fn get_schema(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    state
        .registries
        .get(&id)
        .map(|r| Json(r.to_json_value()))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownSchema", format!("no registry `{id}`")))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/step", post(step_session))
        .route("/v1/sessions/{id}/graph", get(get_graph))
        .route("/v1/validate", post(validate))
        .route("/v1/reward", post(reward))
        .route("/v1/schemas/{id}", get(get_schema))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until `shutdown` resolves, sweeping idle sessions periodically.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let state = state.clone();
        let period = state.ttl.clamp(Duration::from_secs(1), Duration::from_secs(60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                state.sweep();
            }
        })
    };
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result
}
