use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::error::ApiError;
use crate::overlay::OverlayKind;
use crate::service::{DecisionRequest, Service};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

type Shared = Arc<Service>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse_json<'a, T: Deserialize<'a>>(body: &'a [u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("bad_request", format!("request body: {e}")))
}

async fn ingest(State(svc): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let item = blocking(move || svc.ingest(&body)).await?;
    Ok((StatusCode::CREATED, Json(item)).into_response())
}

async fn queue(State(svc): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let limit = match q.get("limit") {
        None => None,
        Some(v) => Some(
            v.parse::<usize>()
                .map_err(|_| ApiError::bad_request("bad_request", format!("limit {v:?} is not a non-negative integer")))?,
        ),
    };
    let items = svc.queue(limit);
    let pending = svc.metrics().counts.pending;
    Ok(Json(json!({ "items": items, "pending": pending })).into_response())
}

async fn item(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(svc.item(&id)?).into_response())
}

async fn overlay(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let raw = q.get("kind").map_or("entropy", String::as_str);
    let kind = OverlayKind::parse(raw)
        .ok_or_else(|| ApiError::bad_request("bad_request", format!("kind must be entropy or segmentation, got {raw:?}")))?;
    let png = blocking(move || svc.overlay(&id, kind)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn decide(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let request: DecisionRequest = parse_json(&body)?;
    let item = blocking(move || svc.decide(&id, request)).await?;
    Ok(Json(item).into_response())
}

#[derive(Deserialize)]
struct FitRequest {
    #[serde(default = "default_alpha")]
    alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

async fn fit(State(svc): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let request: FitRequest = if body.iter().all(u8::is_ascii_whitespace) {
        FitRequest { alpha: default_alpha() }
    } else {
        parse_json(&body)?
    };
    let model = blocking(move || svc.fit_model(request.alpha)).await?;
    Ok(Json(model).into_response())
}

async fn model(State(svc): State<Shared>) -> Result<Response, ApiError> {
    Ok(Json(svc.model()?).into_response())
}

async fn metrics(State(svc): State<Shared>) -> Response {
    Json(svc.metrics()).into_response()
}

async fn fallback() -> ApiError {
    ApiError::not_found("not_found", "no such route")
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/v1/bundles", post(ingest))
        .route("/v1/queue", get(queue))
        .route("/v1/items/{id}", get(item))
        .route("/v1/items/{id}/overlay.png", get(overlay))
        .route("/v1/items/{id}/decision", post(decide))
        .route("/v1/model/fit", post(fit))
        .route("/v1/model", get(model))
        .route("/v1/metrics", get(metrics))
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(service)
}
