use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Multipart, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use geoqa_core::engine::{Engine, EngineError};
use geoqa_core::store::{EmbedError, StoreError};

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    /// Where uploads are persisted; `None` keeps them in memory.
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
pub struct QueryRequest {
    pub session_id: String,
    pub prompt: String,
}

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

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::EmptyPrompt => StatusCode::BAD_REQUEST,
            EngineError::Agent(_) => StatusCode::BAD_GATEWAY,
        };
        Self::new(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::Io { .. } | StoreError::Snapshot(_) => StatusCode::INTERNAL_SERVER_ERROR,
            StoreError::Embed(EmbedError::BackendUnavailable(_)) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/query", post(query))
        .route("/api/steps/{step_id}", get(step))
        .route("/api/data", post(upload))
        .with_state(state)
}

async fn query(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: QueryRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed request body: {e}")))?;
    if req.session_id.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "session_id must not be empty"));
    }
    let engine = state.engine.clone();
    let resp = tokio::task::spawn_blocking(move || engine.query(&req.session_id, &req.prompt))
        .await
        .map_err(join_error)??;
    Ok(Json(resp).into_response())
}

async fn step(State(state): State<AppState>, Path(step_id): Path<String>) -> Result<Response, ApiError> {
    match state.engine.step(&step_id) {
        Some(s) => Ok(Json(s).into_response()),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown step `{step_id}`"))),
    }
}

/// Multipart fields: `dataset`, optional `table`, and `file` holding a
/// GeoJSON FeatureCollection.
async fn upload(State(state): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, m);
    let (mut dataset, mut table, mut file) = (None, None, None);
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        let text = field.text().await.map_err(|e| bad(e.to_string()))?;
        match name.as_str() {
            "dataset" => dataset = Some(text),
            "table" => table = Some(text).filter(|t| !t.trim().is_empty()),
            "file" => file = Some(text),
            _ => {}
        }
    }
    let dataset = dataset.ok_or_else(|| bad("missing `dataset` field".into()))?;
    let file = file.ok_or_else(|| bad("missing `file` field".into()))?;
    let report = tokio::task::spawn_blocking(move || -> Result<_, StoreError> {
        let store = state.engine.store();
        let report = store.ingest_geojson_str(dataset.trim(), table.as_deref(), &file)?;
        if let Some(dir) = &state.data_dir {
            store.save(dir)?;
        }
        Ok(report)
    })
    .await
    .map_err(join_error)??;
    Ok(Json(report).into_response())
}

/// Serves until the listener fails or ctrl-c arrives.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
