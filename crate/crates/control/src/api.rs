//! HTTP front end over a [`RunTable`].

use std::sync::Arc;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::logbuf::stream_lines;
use crate::openapi;
use crate::params::RunParams;
use crate::runs::{RunTable, StartError};

pub const HTTP_ADDR_ENV: &str = "STGEN_HTTP_ADDR";
pub const DEFAULT_HTTP_ADDR: &str = "127.0.0.1:8080";

const VIEWER: &str = include_str!("assets/index.html");

#[derive(Clone)]
struct AppState {
    runs: Arc<RunTable>,
    started: Instant,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("run {id:?} not found"))
}

pub fn router(runs: Arc<RunTable>) -> Router {
    let state = AppState {
        runs,
        started: Instant::now(),
    };
    Router::new()
        .route("/api/status", get(status))
        .route("/api/runs", get(list_runs).post(start_run))
        .route("/api/runs/{id}", get(get_run).delete(stop_run))
        .route("/api/runs/{id}/logs", get(stream_logs))
        .route(
            "/api/openapi.json",
            get(|| async { Json(openapi::document()) }),
        )
        .route("/swagger-ui/index.html", get(|| async { Html(VIEWER) }))
        .with_state(state)
}

async fn status(State(s): State<AppState>) -> Response {
    Json(json!({
        "service": "stgen",
        "version": env!("CARGO_PKG_VERSION"),
        "uptime_s": s.started.elapsed().as_secs_f64(),
        "runs": s.runs.counts(),
        "limits": s.runs.limits(),
    }))
    .into_response()
}

async fn list_runs(State(s): State<AppState>) -> Response {
    Json(s.runs.list()).into_response()
}

/// The body is parsed here rather than by an extractor so that every
/// malformed request gets a 400 with a readable message.
async fn start_run(State(s): State<AppState>, body: Bytes) -> Response {
    let value: serde_json::Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}")),
    };
    let params = match RunParams::from_json(value) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match s.runs.start(params) {
        Ok(handle) => (StatusCode::CREATED, Json(handle)).into_response(),
        Err(StartError::Invalid(e)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e @ StartError::Unavailable(_)) => {
            error(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
        }
    }
}

async fn get_run(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    match s.runs.get(&id) {
        Some(h) => Json(h).into_response(),
        None => not_found(&id),
    }
}

async fn stop_run(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    match s.runs.stop(&id) {
        Some(h) => (StatusCode::ACCEPTED, Json(h)).into_response(),
        None => not_found(&id),
    }
}

#[derive(Debug, Deserialize)]
struct LogQuery {
    cursor: Option<u64>,
}

async fn stream_logs(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<LogQuery>,
) -> Response {
    let Some(buffer) = s.runs.logs(&id) else {
        return not_found(&id);
    };
    let body = Body::from_stream(stream_lines(buffer, q.cursor.unwrap_or(0)));
    (
        [
            (header::CONTENT_TYPE, "text/plain; charset=utf-8"),
            (header::CACHE_CONTROL, "no-cache"),
        ],
        body,
    )
        .into_response()
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    runs: Arc<RunTable>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(runs))
        .with_graceful_shutdown(shutdown)
        .await
}
