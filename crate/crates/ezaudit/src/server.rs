//! HTTP JSON service for live sessions. Routes and schemas are listed in
//! `docs/HTTP_API.md`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ezaudit_core::scenario::ScenarioDecision;
use ezaudit_core::session::{AuditConfig, DrawRecord, Outcome, SessionError, UpdateRecord, Verdict};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::log::{LogError, LoggedSession};
use crate::view::{Instruction, SessionView, TrajectoryView};

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<BTreeMap<u64, Arc<Mutex<LoggedSession>>>>,
    next_id: AtomicU64,
    log_dir: Option<PathBuf>,
}

impl AppState {
    /// Sessions also stream their logs to `log_dir/session-<id>.jsonl`.
    pub fn with_log_dir(log_dir: PathBuf) -> Self {
        Self {
            log_dir: Some(log_dir),
            ..Self::default()
        }
    }

    fn get(&self, id: u64) -> Result<Arc<Mutex<LoggedSession>>, ApiError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/draws", post(next_draw))
        .route("/sessions/{id}/interpretations", post(post_interpretation))
        .route("/sessions/{id}/trajectory", get(get_trajectory))
        .route("/sessions/{id}/log", get(get_log))
        .with_state(state)
}

pub async fn serve(addr: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<ScenarioDecision>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
                decision: None,
            },
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::ScenarioHalt(_) => (StatusCode::UNPROCESSABLE_ENTITY, "scenario_halt"),
            SessionError::MarginRiskUnacknowledged => (StatusCode::UNPROCESSABLE_ENTITY, "margin_risk_unacknowledged"),
            SessionError::InvalidConfig(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
            SessionError::SessionNotActive => (StatusCode::CONFLICT, "session_not_active"),
            SessionError::PendingInterpretation => (StatusCode::CONFLICT, "pending_interpretation"),
            SessionError::NoPendingDraw => (StatusCode::CONFLICT, "no_pending_draw"),
            SessionError::InterpretationSchemaMismatch(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "interpretation_schema_mismatch")
            }
            SessionError::MissingCvr { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "missing_cvr"),
            SessionError::Contest(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_contest_data"),
            SessionError::Comparison(_) | SessionError::Polling(_) | SessionError::Manifest(_) | SessionError::Sampling(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config")
            }
        };
        let mut err = ApiError::new(status, code, e.to_string());
        if let SessionError::ScenarioHalt(d) = e {
            err.body.decision = Some(d);
        }
        err
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Session(s) => s.into(),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "log_failure", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: u64,
    pub state: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawResponse {
    pub draw: DrawRecord,
    pub instruction: Option<Instruction>,
    /// Present when the draw was past the manifest and was resolved on the spot.
    pub auto_resolved: Option<UpdateRecord>,
    pub verdict: Option<Verdict>,
    pub state: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationResponse {
    pub update: UpdateRecord,
    pub verdict: Verdict,
    pub state: SessionView,
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let config: AuditConfig = parse_body(&body)?;
    let mut logged = LoggedSession::start(config)?;
    let id = app.next_id.fetch_add(1, Ordering::Relaxed) + 1;
    if let Some(dir) = &app.log_dir {
        let path = dir.join(format!("session-{id}.jsonl"));
        let file = File::create(&path)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "log_failure", format!("{}: {e}", path.display())))?;
        logged
            .attach_sink(Box::new(BufWriter::new(file)))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "log_failure", e.to_string()))?;
    }
    let state = SessionView::of(&logged);
    app.sessions
        .write()
        .expect("session table lock")
        .insert(id, Arc::new(Mutex::new(logged)));
    Ok((StatusCode::CREATED, Json(CreatedSession { session_id: id, state })))
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Json<Vec<u64>> {
    Json(app.sessions.read().expect("session table lock").keys().copied().collect())
}

async fn get_state(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<SessionView>, ApiError> {
    let s = app.get(id)?;
    let logged = s.lock().expect("session lock");
    Ok(Json(SessionView::of(&logged)))
}

async fn next_draw(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<DrawResponse>, ApiError> {
    let s = app.get(id)?;
    let mut logged = s.lock().expect("session lock");
    let out = logged.next_draw()?;
    let verdict = match out.auto_resolved {
        Some(_) => Some(logged.evaluate()?),
        None => None,
    };
    Ok(Json(DrawResponse {
        instruction: Instruction::for_draw(&out.draw),
        draw: out.draw,
        auto_resolved: out.auto_resolved,
        verdict,
        state: SessionView::of(&logged),
    }))
}

async fn post_interpretation(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    body: Bytes,
) -> Result<Json<InterpretationResponse>, ApiError> {
    let outcome: Outcome = parse_body(&body)?;
    let s = app.get(id)?;
    let mut logged = s.lock().expect("session lock");
    let update = logged.record_interpretation(&outcome)?;
    let verdict = logged.evaluate()?;
    Ok(Json(InterpretationResponse {
        update,
        verdict,
        state: SessionView::of(&logged),
    }))
}

async fn get_trajectory(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<TrajectoryView>, ApiError> {
    let s = app.get(id)?;
    let logged = s.lock().expect("session lock");
    Ok(Json(TrajectoryView::of(&logged)))
}

async fn get_log(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let s = app.get(id)?;
    let text = s.lock().expect("session lock").to_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}
