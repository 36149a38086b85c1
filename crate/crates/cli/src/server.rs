//! JSON-over-HTTP session service under `/api/v1`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use debtfree_core::session::{CreateRequest, ExportFormat, Label, SessionStore};
use debtfree_core::Error;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

/// Maps a core error to an HTTP status.
pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::SessionNotFound(_) | Error::UnknownProject { .. } | Error::UnknownComment(_) => {
            StatusCode::NOT_FOUND
        }
        Error::AlreadyReviewed(_) | Error::PoolExhausted => StatusCode::CONFLICT,
        Error::Config(_)
        | Error::Json(_)
        | Error::EmptyTrainingSet
        | Error::FilterDegenerate
        | Error::SelectionFailure => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Store = Arc<SessionStore>;

/// Runs blocking engine work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> debtfree_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(Error::Persistence(format!("worker failed: {e}")))),
    }
}

pub fn router(store: Store, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/corpora", get(corpora))
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(summary))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/labels", post(label))
        .route("/sessions/{id}/stop", post(stop))
        .route("/sessions/{id}/oracle", post(oracle))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/trace", get(trace))
        .with_state(store);
    let app = Router::new().nest("/api/v1", api);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route(
            "/",
            get(|| async { "debtfree session service; the API lives under /api/v1\n" }),
        ),
    }
}

async fn corpora(State(store): State<Store>) -> Json<serde_json::Value> {
    Json(json!({ "corpora": store.corpus_names() }))
}

async fn list(State(store): State<Store>) -> Json<serde_json::Value> {
    Json(json!({ "sessions": store.session_ids() }))
}

async fn create(
    State(store): State<Store>,
    Json(req): Json<CreateRequest>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let summary = blocking(move || {
        let id = store.create(req)?;
        store.summary(&id)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": summary.session_id, "progress": summary.progress })),
    ))
}

async fn summary(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = blocking(move || store.summary(&id)).await?;
    Ok(Json(s).into_response())
}

async fn next(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<Response> {
    let n = blocking(move || store.next(&id)).await?;
    Ok(Json(n).into_response())
}

#[derive(Deserialize)]
struct LabelBody {
    comment_id: u64,
    label: Label,
}

async fn label(
    State(store): State<Store>,
    Path(id): Path<String>,
    Json(body): Json<LabelBody>,
) -> ApiResult<Response> {
    let p = blocking(move || store.label(&id, body.comment_id, body.label)).await?;
    Ok(Json(p).into_response())
}

async fn stop(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<Response> {
    let p = blocking(move || store.stop(&id)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct OracleParams {
    #[serde(default = "one")]
    steps: usize,
}

fn one() -> usize {
    1
}

async fn oracle(
    State(store): State<Store>,
    Path(id): Path<String>,
    Query(q): Query<OracleParams>,
) -> ApiResult<Response> {
    let p = blocking(move || store.answer_with_oracle(&id, q.steps)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct ExportParams {
    format: String,
}

async fn export(
    State(store): State<Store>,
    Path(id): Path<String>,
    Query(q): Query<ExportParams>,
) -> ApiResult<Response> {
    let format: ExportFormat = q.format.parse()?;
    let body = blocking(move || store.export(&id, format)).await?;
    let content_type = match format {
        ExportFormat::ReportJson => "application/json",
        _ => "text/csv",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], body).into_response())
}

async fn trace(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<Response> {
    let t = blocking(move || store.trace(&id)).await?;
    let points: Vec<(usize, usize)> = t.entries.iter().map(|e| (e.reviewed, e.found)).collect();
    Ok(Json(json!({
        "points": points,
        "entries": t.entries,
        "stop_reason": t.stop_reason,
        "pool_size": t.pool_size,
        "estimate": t.final_estimate,
    }))
    .into_response())
}

/// Binds and serves until ctrl-c or SIGTERM.
pub async fn serve(store: Store, addr: &str, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    log::info!("shut down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
        {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
