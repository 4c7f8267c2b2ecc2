//! HTTP/JSON service hosting interactive composition sessions.
//!
//! Routes:
//! - `POST /sessions` creates a session, optionally with `{"seed": n}`.
//! - `POST /sessions/{id}/actions` appends `{text, duration_s, idempotency_key?}`.
//! - `GET /sessions/{id}` returns the prompt history and spans.
//! - `GET /sessions/{id}/motion` returns the accumulated motion file.
//! - `GET /sessions/{id}/positions` returns world joint positions per frame.
//! - `DELETE /sessions/{id}` drops a session.

mod store;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use motion_compose::compose::StitchConfig;
use motion_compose::model::{Checkpoint, ModelKind, Prompt};
use motion_compose::session::{AppendRequest, CreateSessionRequest, CreatedSession, ErrorBody, SessionError};
use serde::Serialize;
use thiserror::Error;
use tokio::net::TcpListener;

pub use store::SessionStore;

pub const CHECKPOINT_ENV: &str = "MOTION_COMPOSE_CHECKPOINT";
pub const PORT_ENV: &str = "MOTION_COMPOSE_PORT";
pub const SESSION_DIR_ENV: &str = "MOTION_COMPOSE_SESSION_DIR";
pub const DEFAULT_PORT: u16 = 7860;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session {0:?}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    fn join(e: tokio::task::JoinError) -> ApiError {
        ApiError::Internal(format!("generation task failed: {e}"))
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Session(SessionError::InvalidPrompt(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Session(SessionError::IdempotencyConflict(_) | SessionError::Empty) => StatusCode::CONFLICT,
            ApiError::Session(_) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "unknown_session",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Session(SessionError::InvalidPrompt(_)) => "invalid_prompt",
            ApiError::Session(SessionError::IdempotencyConflict(_)) => "idempotency_conflict",
            ApiError::Session(SessionError::Empty) => "empty_session",
            ApiError::Session(_) | ApiError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (status, Json(ErrorBody { code: self.code().to_string(), error: self.to_string() })).into_response()
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub checkpoint: PathBuf,
    pub addr: SocketAddr,
    pub session_dir: Option<PathBuf>,
    /// Base of the seeds given to sessions created without one.
    pub seed: u64,
    pub stitch: StitchConfig,
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    model: ModelKind,
    fps: f64,
    joints: usize,
    sessions: usize,
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn health(State(store): State<Arc<SessionStore>>) -> Json<Health> {
    let m = store.model();
    Json(Health { status: "ok", model: m.kind, fps: m.fps, joints: m.skeleton.num_joints(), sessions: store.len() })
}

async fn create(
    State(store): State<Arc<SessionStore>>,
    body: Bytes,
) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let req: CreateSessionRequest = parse_body(&body)?;
    let info = store.create(req.seed).await?;
    Ok((StatusCode::CREATED, Json(CreatedSession { id: info.id, rng_seed: info.rng_seed })))
}

async fn append(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: AppendRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let out = store.append(&id, Prompt::new(req.text, req.duration_s), req.idempotency_key).await?;
    Ok(Json(out).into_response())
}

async fn info(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(store.info(&id).await?).into_response())
}

async fn motion(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = store.export(&id).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn positions(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(store.positions(&id).await?).into_response())
}

async fn delete(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    store.delete(&id).await?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(info).delete(delete))
        .route("/sessions/{id}/actions", post(append))
        .route("/sessions/{id}/motion", get(motion))
        .route("/sessions/{id}/positions", get(positions))
        .with_state(store)
}

/// Load the checkpoint and open the session store described by `config`.
pub async fn open_store(config: &ServerConfig) -> anyhow::Result<Arc<SessionStore>> {
    let path = config.checkpoint.clone();
    let model = tokio::task::spawn_blocking(move || Checkpoint::load(&path).and_then(|c| c.to_model()))
        .await?
        .with_context(|| format!("loading checkpoint {}", config.checkpoint.display()))?;
    if model.kind == ModelKind::Joint {
        anyhow::bail!("sessions compose one action at a time; a joint model cannot serve them");
    }
    let store = SessionStore::open(Arc::new(model), config.stitch, config.session_dir.clone(), config.seed)?;
    Ok(Arc::new(store))
}

/// Serve on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    store: Arc<SessionStore>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Run the service until interrupted.
pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let store = open_store(&config).await?;
    let listener = TcpListener::bind(config.addr).await.with_context(|| format!("binding {}", config.addr))?;
    serve_on(listener, store, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
