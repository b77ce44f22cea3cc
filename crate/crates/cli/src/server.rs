//! HTTP/1.1 scoring service over an immutable shared [`ModelSet`].

use std::sync::Arc;

use anyhow::Context;
use axum::body::Body;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coughscreen_core::scoring::{ModelSet, ScoreError};
use futures_util::StreamExt;
use serde_json::json;

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 25 * 1024 * 1024;

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

impl From<ScoreError> for ApiError {
    fn from(e: ScoreError) -> Self {
        let status = match &e {
            ScoreError::Audio(_) => StatusCode::BAD_REQUEST,
            ScoreError::ModelNotLoaded(_) => StatusCode::SERVICE_UNAVAILABLE,
            ScoreError::Model(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

/// Past the limit, up to this many further bytes are read and discarded so
/// the client finishes sending and sees the 413 instead of a reset.
const DRAIN_BYTES: usize = 4 * MAX_BODY_BYTES;

fn too_large() -> ApiError {
    ApiError::new(
        StatusCode::PAYLOAD_TOO_LARGE,
        "PayloadTooLarge",
        format!("body exceeds {MAX_BODY_BYTES} bytes"),
    )
}

/// Reads the body, refusing anything over [`MAX_BODY_BYTES`] without
/// buffering past the limit.
async fn read_limited(headers: &HeaderMap, body: Body) -> Result<Vec<u8>, ApiError> {
    let declared = headers
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    let mut stream = body.into_data_stream();
    let mut buf = Vec::new();
    if declared.is_none_or(|n| n <= MAX_BODY_BYTES as u64) {
        buf.reserve(declared.unwrap_or(0) as usize);
        loop {
            match stream.next().await {
                None => return Ok(buf),
                Some(Err(e)) => return Err(ApiError::new(StatusCode::BAD_REQUEST, "BodyReadError", e.to_string())),
                Some(Ok(chunk)) if buf.len() + chunk.len() <= MAX_BODY_BYTES => buf.extend_from_slice(&chunk),
                Some(Ok(_)) => break,
            }
        }
    }
    drop(buf);
    let mut drained = 0usize;
    while drained < DRAIN_BYTES {
        match stream.next().await {
            Some(Ok(chunk)) => drained += chunk.len(),
            _ => break,
        }
    }
    Err(too_large())
}

async fn score(State(models): State<Arc<ModelSet>>, headers: HeaderMap, body: Body) -> Result<Response, ApiError> {
    let bytes = read_limited(&headers, body).await?;
    if models.is_empty() {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "ModelNotLoaded", "no models loaded"));
    }
    let response = tokio::task::spawn_blocking(move || models.score_wav(&bytes))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", e.to_string()))??;
    Ok(Json(response).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

async fn wrong_method() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "MethodNotAllowed", "method not allowed on this endpoint")
}

pub fn router(models: Arc<ModelSet>) -> Router {
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/health", get(health))
        .fallback(not_found)
        .method_not_allowed_fallback(wrong_method)
        .layer(DefaultBodyLimit::disable())
        .with_state(models)
}

/// Serves on an already-bound listener until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, models: ModelSet) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(models))).await
}

/// Binds `host:port` and serves until interrupted.
pub fn run_blocking(models: ModelSet, host: &str, port: u16) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        eprintln!(
            "serving {} model(s) on http://{}",
            models.cases().len(),
            listener.local_addr()?
        );
        axum::serve(listener, router(Arc::new(models)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("server")
    })
}
