//! HTTP session service.
//!
//! | method | path | body | success |
//! |---|---|---|---|
//! | POST | `/sessions` | `{"model": id or inline model, "mode", "bins"?, "param_bins"?, "tie_eps"?}` | 201 view |
//! | GET | `/sessions/{id}` | | 200 view |
//! | DELETE | `/sessions/{id}` | | 204 |
//! | POST | `/sessions/{id}/commit` | `{"stage", "state"}` | 200 view |
//! | POST | `/sessions/{id}/observe` | `{"stage", "state", "kind"?}` | 200 view |
//! | POST | `/sessions/{id}/clone` | | 201 view of an in-memory copy |
//! | GET | `/sessions/{id}/recommendation` | | 200 |
//! | GET | `/sessions/{id}/tree?stage=D3&format=structured` | | 200 |
//! | GET | `/models` | | 200 |
//! | POST | `/models/validate` | model document | 200 report |
//!
//! Every number in a response body is a string with 9 significant digits.
//! A write that outlasts the solve timeout answers 202 `{"id", "status":
//! "solving"}`; it keeps running and the client polls `GET /sessions/{id}`
//! until `solving` is false. Writes to one session are serialized; reads
//! see the last completed state. Errors are `{"error": {"kind", "message"}}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::dynamic::{ObservationKind, ObservationMode, Session, SessionError, SessionStore};
use crate::io::{export_tree, format_sig, model_hash, stringify_numbers, TreeFormat, WIRE_DIGITS};
use crate::model::{load_model, parse_model, stage_order, validate_diagram, InfluenceDiagram, ModelError};
use crate::solver::{SolveError, SolverConfig};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub models_dir: PathBuf,
    pub sessions_dir: PathBuf,
    pub solver: SolverConfig,
    pub solve_timeout: Duration,
}

type Op = Box<dyn FnOnce(&mut Session) -> Result<(), SessionError> + Send>;

struct Slot {
    writer: Arc<tokio::sync::Mutex<()>>,
    session: RwLock<Option<Session>>,
    solving: AtomicBool,
    error: Mutex<Option<String>>,
    persistent: bool,
}

impl Slot {
    fn new(session: Option<Session>, persistent: bool) -> Arc<Slot> {
        Arc::new(Slot {
            writer: Arc::new(tokio::sync::Mutex::new(())),
            solving: AtomicBool::new(session.is_none()),
            session: RwLock::new(session),
            error: Mutex::new(None),
            persistent,
        })
    }
}

pub struct AppState {
    config: ServiceConfig,
    store: SessionStore,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Arc<AppState>, SessionError> {
        let store = SessionStore::new(&config.sessions_dir)?;
        Ok(Arc::new(AppState {
            config,
            store,
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    /// The session's slot, replaying its log on first access.
    async fn slot(self: &Arc<Self>, id: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(s) = self.sessions.lock().get(id) {
            return Ok(s.clone());
        }
        if !valid_id(id) {
            return Err(SessionError::NotFound(id.to_string()).into());
        }
        let store = self.store.clone();
        let owned = id.to_string();
        let session = tokio::task::spawn_blocking(move || store.restore(&owned))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let mut map = self.sessions.lock();
        Ok(map.entry(id.to_string()).or_insert_with(|| Slot::new(Some(session), true)).clone())
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/commit", post(commit))
        .route("/sessions/{id}/observe", post(observe))
        .route("/sessions/{id}/clone", post(clone_session))
        .route("/sessions/{id}/recommendation", get(recommendation))
        .route("/sessions/{id}/tree", get(tree))
        .route("/models", get(list_models))
        .route("/models/validate", post(validate_model))
        .with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("server: {0}")]
    Server(std::io::Error),
}

/// Serves until Ctrl-C or SIGTERM. Every log write is synced as it
/// happens, so shutdown only has to let in-flight requests finish.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(ServiceError::Server)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

// Errors

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn internal(message: String) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use SessionError as E;
        let (status, kind) = match &e {
            E::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            E::OutOfOrder(_) => (StatusCode::CONFLICT, "out_of_order"),
            E::WrongRole(_) => (StatusCode::CONFLICT, "wrong_role"),
            E::Mode(_) => (StatusCode::CONFLICT, "mode"),
            E::Complete => (StatusCode::CONFLICT, "complete"),
            E::Contradiction { .. } => (StatusCode::CONFLICT, "contradiction"),
            E::UnknownState { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_state"),
            E::NoConsequence(_) => (StatusCode::UNPROCESSABLE_ENTITY, "no_consequence"),
            E::Surgery(_) => (StatusCode::UNPROCESSABLE_ENTITY, "surgery"),
            E::Model(_) => (StatusCode::UNPROCESSABLE_ENTITY, "model"),
            E::Solve(SolveError::Infer(crate::infer::InferError::ImpossibleEvidence)) => {
                (StatusCode::CONFLICT, "impossible_evidence")
            }
            E::Solve(_) => (StatusCode::UNPROCESSABLE_ENTITY, "solve"),
            E::Log(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_log"),
            E::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "model", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": {"kind": self.kind, "message": self.message}})),
        )
            .into_response()
    }
}

fn reply(status: StatusCode, body: Value) -> Response {
    (status, Json(stringify_numbers(body))).into_response()
}

fn accepted(id: &str) -> Response {
    reply(StatusCode::ACCEPTED, json!({"id": id, "status": "solving"}))
}

// Request bodies

fn text_field(body: &Value, key: &str) -> Result<String, ApiError> {
    match body.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(match n.as_i64() {
            Some(i) => i.to_string(),
            None => format_sig(n.as_f64().unwrap_or(f64::NAN), WIRE_DIGITS),
        }),
        Some(Value::Bool(b)) => Ok(if *b { "True" } else { "False" }.to_string()),
        _ => Err(ApiError::bad_request(format!("missing field `{key}`"))),
    }
}

fn number_field(body: &Value, key: &str) -> Result<Option<f64>, ApiError> {
    match body.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => Ok(n.as_f64()),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("`{key}` is not a number"))),
        Some(_) => Err(ApiError::bad_request(format!("`{key}` is not a number"))),
    }
}

fn solver_config(base: SolverConfig, body: &Value) -> Result<SolverConfig, ApiError> {
    let mut cfg = base;
    if let Some(b) = number_field(body, "bins")? {
        cfg.bins = b as usize;
    }
    if let Some(b) = number_field(body, "param_bins")? {
        cfg.param_bins = b as usize;
    }
    if let Some(e) = number_field(body, "tie_eps")? {
        cfg.tie_eps = Some(e);
    }
    Ok(cfg)
}

fn model_path(dir: &Path, id: &str) -> Option<PathBuf> {
    let stem = id.strip_suffix(".json").unwrap_or(id);
    valid_id(stem).then(|| dir.join(format!("{stem}.json")))
}

fn resolve_model(state: &AppState, spec: &Value) -> Result<InfluenceDiagram, ApiError> {
    match spec {
        Value::String(id) => {
            let path = model_path(&state.config.models_dir, id)
                .filter(|p| p.is_file())
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("model `{id}` not found")))?;
            let bytes = std::fs::read(&path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
            Ok(load_model(&bytes)?)
        }
        Value::Object(_) => Ok(load_model(spec.to_string().as_bytes())?),
        _ => Err(ApiError::bad_request("`model` must be a model id or a model document")),
    }
}

// Views

fn session_view(slot: &Slot, id: &str) -> Result<Value, ApiError> {
    let solving = slot.solving.load(Ordering::SeqCst);
    let guard = slot.session.read();
    let Some(s) = guard.as_ref() else {
        if let Some(err) = slot.error.lock().clone() {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "open_failed", err));
        }
        return Ok(json!({"id": id, "status": "solving", "solving": true}));
    };
    let mut timeline = Vec::new();
    for (stage, owner) in s.stages() {
        let entry = if let Some(state) = s.committed.get(stage) {
            json!({"stage": stage, "owner": owner, "status": "committed", "state": state})
        } else if let Some(o) = s.observations.iter().find(|o| &o.stage == stage) {
            json!({"stage": stage, "owner": owner, "status": "observed", "kind": o.kind,
                   "variable": o.variable, "state": o.state})
        } else {
            json!({"stage": stage, "owner": owner, "status": "pending"})
        };
        timeline.push(entry);
    }
    let rec = s.recommend()?;
    Ok(json!({
        "id": s.id,
        "mode": s.mode,
        "status": rec.status,
        "solving": solving,
        "last_error": slot.error.lock().clone(),
        "pointer": s.pointer,
        "current_stage": s.current_stage(),
        "timeline": timeline,
        "evidence": s.evidence,
        "recommendation": rec,
        "config": s.config,
        "events": s.log.len(),
    }))
}

fn stages_json(d: &InfluenceDiagram) -> Value {
    let stages = stage_order(d).unwrap_or_default();
    Value::Array(stages.iter().map(|(s, o)| json!({"stage": s, "owner": o})).collect())
}

// Handlers

async fn create_session(State(state): State<Arc<AppState>>, Json(body): Json<Value>) -> Result<Response, ApiError> {
    let spec = body.get("model").ok_or_else(|| ApiError::bad_request("missing field `model`"))?;
    let diagram = resolve_model(&state, spec)?;
    let mode: ObservationMode = match body.get("mode").and_then(Value::as_str) {
        Some(m) => m.parse().map_err(ApiError::bad_request)?,
        None => ObservationMode::Attack,
    };
    let cfg = solver_config(state.config.solver, &body)?;
    let id = uuid::Uuid::new_v4().to_string();
    let slot = Slot::new(None, true);
    state.sessions.lock().insert(id.clone(), slot.clone());

    let (st, sl, sid) = (state.clone(), slot.clone(), id.clone());
    let task = tokio::task::spawn_blocking(move || {
        let result = Session::open_with_id(sid.clone(), &diagram, mode, cfg).and_then(|s| {
            st.store.append(&sid, &s.log)?;
            *sl.session.write() = Some(s);
            Ok(())
        });
        *sl.error.lock() = result.as_ref().err().map(|e| e.to_string());
        sl.solving.store(false, Ordering::SeqCst);
        result
    });
    match tokio::time::timeout(state.config.solve_timeout, task).await {
        Ok(Ok(Ok(()))) => Ok(reply(StatusCode::CREATED, session_view(&slot, &id)?)),
        Ok(Ok(Err(e))) => {
            state.sessions.lock().remove(&id);
            Err(e.into())
        }
        Ok(Err(e)) => {
            state.sessions.lock().remove(&id);
            Err(ApiError::internal(e.to_string()))
        }
        Err(_) => Ok(accepted(&id)),
    }
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = state.slot(&id).await?;
    Ok(reply(StatusCode::OK, session_view(&slot, &id)?))
}

async fn delete_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = state.slot(&id).await?;
    let _guard = slot.writer.lock().await;
    state.sessions.lock().remove(&id);
    if slot.persistent {
        state.store.delete(&id)?;
    }
    Ok(StatusCode::NO_CONTENT.into_response())
}

/// Runs `op` on a copy of the session; the copy replaces the session (and
/// its new events reach the log) only if `op` succeeds.
async fn write(state: &Arc<AppState>, id: &str, op: Op) -> Result<Response, ApiError> {
    let slot = state.slot(id).await?;
    let guard = slot.writer.clone().lock_owned().await;
    slot.solving.store(true, Ordering::SeqCst);
    let (st, sl) = (state.clone(), slot.clone());
    let task = tokio::task::spawn_blocking(move || {
        let _guard = guard;
        let result = (|| {
            let mut s = sl.session.read().clone().ok_or(SessionError::OutOfOrder("the session is still opening".into()))?;
            let before = s.log.len();
            op(&mut s)?;
            if sl.persistent {
                st.store.append(&s.id, &s.log[before..])?;
            }
            *sl.session.write() = Some(s);
            Ok(())
        })();
        *sl.error.lock() = result.as_ref().err().map(|e: &SessionError| e.to_string());
        sl.solving.store(false, Ordering::SeqCst);
        result
    });
    match tokio::time::timeout(state.config.solve_timeout, task).await {
        Ok(Ok(Ok(()))) => Ok(reply(StatusCode::OK, session_view(&slot, id)?)),
        Ok(Ok(Err(e))) => Err(e.into()),
        Ok(Err(e)) => Err(ApiError::internal(e.to_string())),
        Err(_) => Ok(accepted(id)),
    }
}

async fn commit(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<Value>,
) -> Result<Response, ApiError> {
    let stage = text_field(&body, "stage")?;
    let value = text_field(&body, "state")?;
    write(&state, &id, Box::new(move |s| s.commit(&stage, &value))).await
}

async fn observe(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<Value>,
) -> Result<Response, ApiError> {
    let stage = text_field(&body, "stage")?;
    let value = text_field(&body, "state")?;
    let kind: Option<ObservationKind> = match body.get("kind") {
        None | Some(Value::Null) => None,
        Some(k) => Some(
            serde_json::from_value(k.clone()).map_err(|_| ApiError::bad_request("`kind` must be attack or consequence"))?,
        ),
    };
    write(&state, &id, Box::new(move |s| s.observe(&stage, kind, &value))).await
}

async fn clone_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = state.slot(&id).await?;
    let copy = slot
        .session
        .read()
        .as_ref()
        .map(Session::fork)
        .ok_or_else(|| ApiError::from(SessionError::OutOfOrder("the session is still opening".into())))?;
    let new_id = copy.id.clone();
    let new_slot = Slot::new(Some(copy), false);
    state.sessions.lock().insert(new_id.clone(), new_slot.clone());
    Ok(reply(StatusCode::CREATED, session_view(&new_slot, &new_id)?))
}

async fn recommendation(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = state.slot(&id).await?;
    let guard = slot.session.read();
    let s = guard
        .as_ref()
        .ok_or_else(|| ApiError::from(SessionError::OutOfOrder("the session is still opening".into())))?;
    let rec = s.recommend()?;
    Ok(reply(StatusCode::OK, serde_json::to_value(rec).expect("recommendations serialize")))
}

#[derive(Debug, Deserialize)]
struct TreeQuery {
    stage: Option<String>,
    format: Option<String>,
}

async fn tree(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<TreeQuery>,
) -> Result<Response, ApiError> {
    let format: TreeFormat = match q.format.as_deref() {
        Some(f) => f.parse().map_err(ApiError::bad_request)?,
        None => TreeFormat::Structured,
    };
    let slot = state.slot(&id).await?;
    let guard = slot.session.read();
    let s = guard
        .as_ref()
        .ok_or_else(|| ApiError::from(SessionError::OutOfOrder("the session is still opening".into())))?;
    // A stage may be named or given by its position in the stage order.
    let stage = match q.stage {
        Some(k) => match k.parse::<usize>() {
            Ok(i) if !s.stages().iter().any(|(d, _)| d.as_str() == k) => Some(
                s.stages()
                    .get(i)
                    .map(|(d, _)| d.to_string())
                    .ok_or_else(|| ApiError::bad_request(format!("no stage at position {i}")))?,
            ),
            _ => Some(k),
        },
        None => None,
    };
    let name = stage
        .clone()
        .or_else(|| s.current_stage().map(|d| d.to_string()))
        .ok_or_else(|| ApiError::from(SessionError::Complete))?;
    let node = s.tree(stage.as_deref())?;
    match format {
        TreeFormat::Structured => {
            let tree = node.map(|t| serde_json::to_value(t).expect("trees serialize"));
            Ok(reply(StatusCode::OK, json!({"stage": name, "tree": tree})))
        }
        f => {
            let node = node.ok_or_else(|| {
                ApiError::new(StatusCode::NOT_FOUND, "no_tree", format!("no tree was built for `{name}`"))
            })?;
            let ctype = if f == TreeFormat::Dot { "text/vnd.graphviz" } else { "text/plain; charset=utf-8" };
            Ok(([(header::CONTENT_TYPE, ctype)], export_tree(node, f)).into_response())
        }
    }
}

async fn list_models(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let dir = state.config.models_dir.clone();
    let models = tokio::task::spawn_blocking(move || {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                let bytes = std::fs::read(p).unwrap_or_default();
                let mut entry = json!({"id": id, "hash": model_hash(&bytes)});
                match parse_model(&bytes) {
                    Ok(d) => {
                        let report = validate_diagram(&d);
                        entry["ok"] = json!(report.ok);
                        entry["variables"] = json!(d.variables.len());
                        entry["stages"] = stages_json(&d);
                        entry["description"] = d.meta.get("description").cloned().unwrap_or(Value::Null);
                    }
                    Err(e) => {
                        entry["ok"] = json!(false);
                        entry["error"] = json!(e.to_string());
                    }
                }
                entry
            })
            .collect::<Vec<_>>()
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(reply(StatusCode::OK, json!({"models": models})))
}

async fn validate_model(body: axum::body::Bytes) -> Result<Response, ApiError> {
    let d = match parse_model(&body) {
        Ok(d) => d,
        Err(e) => {
            return Ok(reply(
                StatusCode::OK,
                json!({"ok": false, "error": e.to_string(), "violations": [], "warnings": []}),
            ))
        }
    };
    let report = validate_diagram(&d);
    let mut v = serde_json::to_value(&report).expect("reports serialize");
    if report.ok {
        v["stages"] = stages_json(&d);
    }
    Ok(reply(StatusCode::OK, v))
}
