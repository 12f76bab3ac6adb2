use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::{AnnotationError, AnnotationStore, JudgmentSubmission, NewBatch};

type Shared = Arc<AnnotationStore>;

struct ApiError(AnnotationError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            AnnotationError::UnknownBatch(_)
            | AnnotationError::UnknownTask(_)
            | AnnotationError::UnknownAnnotator { .. } => StatusCode::NOT_FOUND,
            AnnotationError::DuplicateBatch(_) => StatusCode::CONFLICT,
            AnnotationError::InvalidLabel { .. }
            | AnnotationError::SampleTooLarge { .. }
            | AnnotationError::Invalid(_) => StatusCode::BAD_REQUEST,
            AnnotationError::NoOverlap => StatusCode::CONFLICT,
            AnnotationError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        ApiError(e)
    }
}

// The store does blocking file IO, so every handler runs it off the
// async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, AnnotationError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(AnnotationError::Storage(e.to_string())))?
        .map_err(ApiError)
}

async fn list_batches(State(store): State<Shared>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(move || Ok(store.list_batches())).await?))
}

async fn create_batch(
    State(store): State<Shared>,
    Json(req): Json<NewBatch>,
) -> Result<impl IntoResponse, ApiError> {
    let id = blocking(move || store.create_batch(req)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "batch_id": id }))))
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

async fn next_item(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<NextQuery>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(
        blocking(move || store.next_item(&id, &q.annotator)).await?,
    ))
}

async fn submit(
    State(store): State<Shared>,
    Json(sub): Json<JudgmentSubmission>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(move || store.submit_judgment(sub)).await?))
}

async fn agreement(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(move || store.agreement_summary(&id)).await?))
}

async fn export(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let records = blocking(move || store.export_records(&id)).await?;
    let mut body = String::new();
    for r in &records {
        body.push_str(&serde_json::to_string(r).expect("export record serializes"));
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

/// All endpoints, plus static files from `static_dir` for any other path.
pub fn router(store: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/batches", get(list_batches).post(create_batch))
        .route("/batches/{id}/next", get(next_item))
        .route("/batches/{id}/agreement", get(agreement))
        .route("/batches/{id}/export", get(export))
        .route("/judgments", post(submit))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is stopped.
pub async fn serve(
    store: Shared,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store, static_dir)).await
}
