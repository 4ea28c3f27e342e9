//! HTTP and WebSocket service around one live [`Session`].
//!
//! All routes live under `/v1`:
//!
//! | method | path                  | body                                  |
//! |--------|-----------------------|---------------------------------------|
//! | GET    | `/v1/health`          |                                       |
//! | POST   | `/v1/session`         | `{"scenario": "<scenario TOML>"}`     |
//! | GET    | `/v1/session`         |                                       |
//! | DELETE | `/v1/session`         |                                       |
//! | POST   | `/v1/session/start`   |                                       |
//! | POST   | `/v1/session/pause`   |                                       |
//! | POST   | `/v1/session/step`    | `{"seconds": 5}` (advances a running session) |
//! | POST   | `/v1/session/command` | `{"kind": "heading", "heading_deg": 135}`, `{"kind": "policy", "policy": "NE"}` or `{"kind": "safest"}` |
//! | GET    | `/v1/ring`            |                                       |
//! | GET    | `/v1/stream`          | WebSocket upgrade                     |
//!
//! Session routes answer with a snapshot. Errors carry
//! `{"error": {"code": ..., "message": ...}}` with codes `bad_scenario`,
//! `bad_request`, `no_session`, `terminal_session`, `no_models` and
//! `internal`.
//!
//! A background stepper advances a running session in simulated time at
//! `speed` times wall-clock rate. The stream pushes the latest snapshot
//! twice a second whenever the session clock has moved.

use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, Weak};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bvr_core::awareness::Surrogate;
use bvr_core::session::{OperatorCommand, SessionError, SessionSnapshot};
use bvr_core::surrogate::load_manifest;
use bvr_core::{ModelSet, Scenario, Session, SimConfig};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

pub const STREAM_PERIOD: Duration = Duration::from_millis(500);
const STEPPER_PERIOD: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub sim: SimConfig,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Model set used for every session; when absent the scenario's own
    /// manifest is loaded.
    pub models: Option<Arc<ModelSet>>,
}

pub struct AppState {
    config: ServiceConfig,
    session: Mutex<Option<Session>>,
    snapshots: watch::Sender<Option<Arc<SessionSnapshot>>>,
}

impl AppState {
    fn lock(&self) -> MutexGuard<'_, Option<Session>> {
        self.session.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn publish(&self, session: &Option<Session>) -> Option<Arc<SessionSnapshot>> {
        let snapshot = session.as_ref().map(|s| Arc::new(s.snapshot()));
        self.snapshots.send_replace(snapshot.clone());
        snapshot
    }
}

/// Shared service state; starts the background stepper.
pub fn new_state(config: ServiceConfig) -> Arc<AppState> {
    let (snapshots, _) = watch::channel(None);
    let state = Arc::new(AppState { config, session: Mutex::new(None), snapshots });
    spawn_stepper(Arc::downgrade(&state));
    state
}

fn spawn_stepper(state: Weak<AppState>) {
    std::thread::spawn(move || {
        let mut last = Instant::now();
        // Simulated time owed to the session, carried between ticks so
        // rounding to whole integration steps does not drift.
        let mut owed = 0.0;
        loop {
            std::thread::sleep(STEPPER_PERIOD);
            let Some(state) = state.upgrade() else { break };
            let now = Instant::now();
            let elapsed = now.duration_since(last).as_secs_f64();
            last = now;
            let mut guard = state.lock();
            let Some(session) = guard.as_mut().filter(|s| s.is_running()) else {
                owed = 0.0;
                continue;
            };
            let dt = state.config.sim.dt();
            owed += elapsed * state.config.speed;
            let steps = (owed / dt).floor();
            if steps < 1.0 {
                continue;
            }
            owed -= steps * dt;
            // A failing step ends the run; the snapshot shows where it stopped.
            if session.step(steps * dt).is_err() {
                let _ = session.set_running(false);
            }
            state.publish(&guard);
        }
    });
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/session", post(create_session).get(get_session).delete(delete_session))
        .route("/v1/session/start", post(start))
        .route("/v1/session/pause", post(pause))
        .route("/v1/session/step", post(step))
        .route("/v1/session/command", post(command))
        .route("/v1/ring", get(ring))
        .route("/v1/stream", get(stream))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn no_session() -> Self {
        Self::new(StatusCode::NOT_FOUND, "no_session", "no session is loaded")
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Terminal(_) => Self::new(StatusCode::CONFLICT, "terminal_session", e.to_string()),
            SessionError::BadCommand(_) | SessionError::BadStep(_) => {
                Self::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string())
            }
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": ErrorBody { code: self.code, message: self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Arc<SessionSnapshot>>, ApiError>;

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct CreateSession {
    scenario: String,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>) -> ApiResult {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let scenario = Scenario::parse(&body.scenario, Path::new("."))
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_scenario", e.to_string()))?;
    let models: Arc<dyn Surrogate + Send + Sync> = match (&state.config.models, &scenario.models) {
        (Some(m), _) => m.clone(),
        (None, Some(path)) => Arc::new(
            load_manifest(path).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_scenario", e.to_string()))?,
        ),
        (None, None) => {
            return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_models", "no model set configured"))
        }
    };
    let mut guard = state.lock();
    *guard = Some(Session::new(scenario, models, state.config.sim.clone()));
    Ok(Json(state.publish(&guard).expect("session just created")))
}

async fn delete_session(State(state): State<Arc<AppState>>) -> Result<StatusCode, ApiError> {
    let mut guard = state.lock();
    guard.take().ok_or_else(ApiError::no_session)?;
    state.publish(&guard);
    Ok(StatusCode::NO_CONTENT)
}

async fn get_session(State(state): State<Arc<AppState>>) -> ApiResult {
    state.snapshots.borrow().clone().map(Json).ok_or_else(ApiError::no_session)
}

/// Applies `f` to the live session and publishes the result.
fn with_session(state: &AppState, f: impl FnOnce(&mut Session) -> Result<(), SessionError>) -> ApiResult {
    let mut guard = state.lock();
    let session = guard.as_mut().ok_or_else(ApiError::no_session)?;
    f(session)?;
    Ok(Json(state.publish(&guard).expect("session present")))
}

async fn start(State(state): State<Arc<AppState>>) -> ApiResult {
    with_session(&state, |s| s.set_running(true))
}

async fn pause(State(state): State<Arc<AppState>>) -> ApiResult {
    with_session(&state, |s| s.set_running(false))
}

#[derive(Deserialize)]
struct StepRequest {
    seconds: f64,
}

async fn step(State(state): State<Arc<AppState>>, body: Result<Json<StepRequest>, axum::extract::rejection::JsonRejection>) -> ApiResult {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    with_session(&state, |s| s.step(body.seconds))
}

async fn command(State(state): State<Arc<AppState>>, body: Result<Json<OperatorCommand>, axum::extract::rejection::JsonRejection>) -> ApiResult {
    let Json(cmd) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    with_session(&state, |s| s.command(cmd))
}

async fn ring(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let snapshot = state.snapshots.borrow().clone().ok_or_else(ApiError::no_session)?;
    Ok(Json(serde_json::json!({
        "clock_s": snapshot.clock_s,
        "ring_clock_s": snapshot.ring_clock_s,
        "ring": snapshot.ring,
    })))
}

/// One stream message.
#[derive(Serialize)]
struct StreamMessage<'a> {
    clock_s: f64,
    outcome: bvr_core::Outcome,
    running: bool,
    uav: &'a bvr_core::session::UavView,
    ring: &'a Option<bvr_core::awareness::RingPayload>,
    ring_clock_s: Option<f64>,
    active_policy: Option<bvr_core::PolicyId>,
}

async fn stream(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| push_snapshots(socket, state))
}

async fn push_snapshots(mut socket: WebSocket, state: Arc<AppState>) {
    let mut ticker = tokio::time::interval(STREAM_PERIOD);
    let mut last_clock = f64::NEG_INFINITY;
    loop {
        tokio::select! {
            _ = ticker.tick() => {}
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => continue,
            },
        }
        let Some(snapshot) = state.snapshots.borrow().clone() else { continue };
        if !(snapshot.clock_s > last_clock) {
            continue;
        }
        last_clock = snapshot.clock_s;
        let message = StreamMessage {
            clock_s: snapshot.clock_s,
            outcome: snapshot.outcome,
            running: snapshot.running,
            uav: &snapshot.uav,
            ring: &snapshot.ring,
            ring_clock_s: snapshot.ring_clock_s,
            active_policy: snapshot.active_policy,
        };
        let text = serde_json::to_string(&message).expect("snapshot serializes");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return;
        }
    }
}
