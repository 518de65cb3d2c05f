//! JSON-over-HTTP front for [`AnnotationService`].
//!
//! | method | path | response |
//! |---|---|---|
//! | GET | `/api/health` | `{"status":"ok","pairs":N}` |
//! | GET | `/api/tasks/next?expert=ID` | next pair or `{"status":"done",...}` |
//! | POST | `/api/judgments` | acknowledgement |
//! | GET | `/api/stats/agreement` | agreement statistics |
//! | GET | `/api/export/ground-truth` | ground-truth CSV |
//! | GET | `/api/recipes/{id}` | recipe card |
//!
//! Errors are `{"error": <reason code>, "message": <text>}` with a 4xx status.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::annotation::{AnnotationError, AnnotationService, Verdict};

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let (status, code) = match &e {
            AnnotationError::MissingExpert => (StatusCode::BAD_REQUEST, "missing_expert"),
            AnnotationError::InvalidVerdict(_) => (StatusCode::BAD_REQUEST, "invalid_verdict"),
            AnnotationError::UnknownExpert(_) => (StatusCode::FORBIDDEN, "unknown_expert"),
            AnnotationError::PairNotInTaskSet(..) => (StatusCode::UNPROCESSABLE_ENTITY, "pair_not_in_task_set"),
            AnnotationError::UnknownRecipe(_) => (StatusCode::NOT_FOUND, "unknown_recipe"),
            AnnotationError::InsufficientExperts(_) => (StatusCode::CONFLICT, "insufficient_experts"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type Shared = Arc<AnnotationService>;

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/tasks/next", get(next_task))
        .route("/api/judgments", post(submit))
        .route("/api/stats/agreement", get(agreement))
        .route("/api/export/ground-truth", get(export))
        .route("/api/recipes/{id}", get(recipe))
        .with_state(service)
}

async fn health(State(svc): State<Shared>) -> impl IntoResponse {
    Json(json!({ "status": "ok", "pairs": svc.tasks().pairs.len() }))
}

#[derive(Deserialize)]
struct ExpertQuery {
    expert: Option<String>,
}

async fn next_task(State(svc): State<Shared>, Query(q): Query<ExpertQuery>) -> Result<impl IntoResponse, ApiError> {
    let expert = q.expert.unwrap_or_default();
    Ok(Json(svc.next_task(&expert)?))
}

#[derive(Deserialize)]
struct SubmitBody {
    expert: String,
    main_id: String,
    secondary_id: String,
    verdict: String,
}

async fn submit(State(svc): State<Shared>, body: Result<Json<SubmitBody>, JsonRejection>) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.body_text()))?;
    let verdict: Verdict = body.verdict.parse()?;
    // The store syncs to disk before returning.
    let ack = tokio::task::spawn_blocking(move || svc.submit(&body.expert, &body.main_id, &body.secondary_id, verdict))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(ack))
}

async fn agreement(State(svc): State<Shared>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(svc.agreement()?))
}

async fn export(State(svc): State<Shared>) -> Result<impl IntoResponse, ApiError> {
    let body = svc.export()?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body))
}

async fn recipe(State(svc): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(svc.recipe(&id)?))
}

/// Serves until `shutdown` resolves, then finishes in-flight requests.
pub async fn serve(listener: TcpListener, service: Shared, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}
