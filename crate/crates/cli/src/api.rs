//! JSON-over-HTTP interface to a run.
//!
//! Reads are served from the latest published snapshot. Mutations (`/step`,
//! `/observe`, `/reset`) go through one command queue drained by a single
//! worker thread that owns the run and persists it after every command.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{mpsc, oneshot, watch};

use seqbed::engine::{save, EngineError, IterationRecord, RunConfig, RunState, StateView};
use seqbed::models::ModelError;
use seqbed::optimizer::{GridPoint, TraceStep};
use seqbed::utilities::SurfaceRow;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::Status { .. } => StatusCode::CONFLICT,
            EngineError::NoSuchIteration { .. } => StatusCode::NOT_FOUND,
            EngineError::Model(ModelError::InvalidObservation(_)) | EngineError::Config(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Reply = oneshot::Sender<Result<StateView, ApiError>>;

enum Command {
    Step(Reply),
    Observe(Value, Reply),
    Reset(Box<RunConfig>, Reply),
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<Command>,
    snapshot: watch::Receiver<Arc<RunState>>,
}

fn worker(mut state: RunState, dir: Option<PathBuf>, mut rx: mpsc::Receiver<Command>, tx: watch::Sender<Arc<RunState>>) {
    while let Some(cmd) = rx.blocking_recv() {
        let mut next = state.clone();
        let (result, reply) = match cmd {
            Command::Step(r) => (next.advance(), r),
            Command::Observe(y, r) => (next.observe_json(&y), r),
            Command::Reset(cfg, r) => (RunState::new(*cfg).map(|s| next = s), r),
        };
        let result = result.and_then(|_| match &dir {
            Some(d) => save(&next, d),
            None => Ok(()),
        });
        let answer = match result {
            Ok(()) => {
                state = next;
                tx.send_replace(Arc::new(state.clone()));
                Ok(state.view())
            }
            Err(e) => {
                error!("command rejected: {e}");
                Err(e.into())
            }
        };
        let _ = reply.send(answer);
    }
    info!("command queue closed");
}

/// Builds the router and starts the worker owning `state`. With `dir` set,
/// the run is saved there after every accepted command.
pub fn router(state: RunState, dir: Option<PathBuf>) -> Router {
    let (cmd_tx, cmd_rx) = mpsc::channel(16);
    let (snap_tx, snap_rx) = watch::channel(Arc::new(state.clone()));
    std::thread::spawn(move || worker(state, dir, cmd_rx, snap_tx));
    let app = AppState { commands: cmd_tx, snapshot: snap_rx };
    Router::new()
        .route("/state", get(get_state))
        .route("/posterior", get(get_posterior))
        .route("/surface", get(get_surface))
        .route("/step", post(post_step))
        .route("/observe", post(post_observe))
        .route("/reset", post(post_reset))
        .with_state(app)
}

async fn send(app: &AppState, make: impl FnOnce(Reply) -> Command) -> Result<Json<StateView>, ApiError> {
    let (tx, rx) = oneshot::channel();
    app.commands
        .send(make(tx))
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "engine worker stopped"))?;
    let view = rx.await.map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "engine worker stopped"))??;
    Ok(Json(view))
}

async fn get_state(State(app): State<AppState>) -> Json<StateView> {
    Json(app.snapshot.borrow().view())
}

#[derive(Debug, Deserialize)]
struct IterationQuery {
    iteration: Option<usize>,
}

async fn get_posterior(State(app): State<AppState>, Query(q): Query<IterationQuery>) -> Result<Response, ApiError> {
    let snap = app.snapshot.borrow().clone();
    let k = q.iteration.unwrap_or(snap.completed());
    let summary = tokio::task::spawn_blocking(move || snap.posterior(k))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(summary).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SurfaceView {
    pub iteration: usize,
    pub design: f64,
    pub grid: Vec<GridPoint>,
    pub evaluations: Vec<SurfaceRow>,
    pub trace: Vec<TraceStep>,
}

impl From<&IterationRecord> for SurfaceView {
    fn from(r: &IterationRecord) -> Self {
        Self { iteration: r.iteration, design: r.design, grid: r.bo.grid.clone(), evaluations: r.surface.clone(), trace: r.bo.trace.clone() }
    }
}

async fn get_surface(State(app): State<AppState>, Query(q): Query<IterationQuery>) -> Result<Json<SurfaceView>, ApiError> {
    let snap = app.snapshot.borrow().clone();
    let mut records = snap.history.iter().chain(snap.pending.iter());
    let found = match q.iteration {
        Some(k) => records.find(|r| r.iteration == k),
        None => records.last(),
    };
    found.map(|r| Json(r.into())).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, format!("no utility surface for iteration {:?}", q.iteration))
    })
}

async fn post_step(State(app): State<AppState>) -> Result<Json<StateView>, ApiError> {
    send(&app, Command::Step).await
}

#[derive(Debug, Deserialize)]
struct ObserveBody {
    y: Value,
}

async fn post_observe(State(app): State<AppState>, Json(body): Json<ObserveBody>) -> Result<Json<StateView>, ApiError> {
    send(&app, |r| Command::Observe(body.y, r)).await
}

#[derive(Debug, Deserialize)]
struct ResetBody {
    config: Value,
}

async fn post_reset(State(app): State<AppState>, Json(body): Json<ResetBody>) -> Result<Json<StateView>, ApiError> {
    let cfg: RunConfig = serde_json::from_value(body.config)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid config: {e}")))?;
    send(&app, |r| Command::Reset(Box::new(cfg), r)).await
}
