use std::collections::BTreeSet;
use std::sync::Arc;

use alt4blind_core::pipeline::resolve_image;
use alt4blind_core::{ChartType, Corpus, EmbeddingProvider, FusedQuery, Retrieval};
use axum::body::Bytes;
use axum::extract::multipart::{MultipartError, MultipartRejection};
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::error::ApiError;
use crate::session::Session;
use crate::{AppState, DEFAULT_GUIDELINES};

/// Room for multipart framing on top of the upload limit.
pub const MULTIPART_SLACK: usize = 64 * 1024;

const PATH_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'_')
    .remove(b'.')
    .remove(b'~');

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
const JPEG_MAGIC: &[u8] = b"\xff\xd8\xff";

/// One suggested reference chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePayload {
    pub record_id: String,
    pub alt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub chart_type: ChartType,
    pub fused_score: f64,
    pub image_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_score: Option<f64>,
    pub image_url: String,
}

pub fn router(state: Arc<AppState>) -> Router {
    let body_limit = state.config.max_upload_bytes + MULTIPART_SLACK;
    let origin = match &state.config.cors_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => {
                tracing::warn!(origin = %o, "ignoring unparsable CORS origin");
                AllowOrigin::any()
            }
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/refine", post(refine))
        .route("/charts/{id}", get(chart))
        .route("/charts/{id}/image", get(chart_image))
        .route("/health", get(health))
        .route("/guidelines", get(guidelines))
        .method_not_allowed_fallback(method_not_allowed);
    Router::new()
        .nest("/api/v1", api)
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(cors)
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::not_found("not_found", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        "method not allowed on this route",
    )
}

fn image_url(id: &str) -> String {
    format!(
        "/api/v1/charts/{}/image",
        utf8_percent_encode(id, PATH_SEGMENT)
    )
}

fn payloads(corpus: &Corpus, result: &Retrieval) -> Result<Vec<CandidatePayload>, ApiError> {
    result
        .ranked
        .iter()
        .map(|r| {
            let record = corpus
                .get(&r.record_id)
                .ok_or_else(|| ApiError::internal(format!("no record for {}", r.record_id)))?;
            Ok(CandidatePayload {
                record_id: r.record_id.clone(),
                alt_text: record.alt_text.clone(),
                caption: record.caption.clone(),
                chart_type: record.chart_type,
                fused_score: r.fused_score as f64,
                image_score: r.image_score as f64,
                text_score: r.text_score.map(|s| s as f64),
                image_url: image_url(&r.record_id),
            })
        })
        .collect()
}

fn multipart_error(e: MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            e.body_text(),
        )
    } else {
        ApiError::bad_request("invalid_request", e.body_text())
    }
}

fn image_extension(bytes: &[u8]) -> Option<&'static str> {
    if bytes.starts_with(PNG_MAGIC) {
        Some("png")
    } else if bytes.starts_with(JPEG_MAGIC) {
        Some("jpg")
    } else {
        None
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<Value>, ApiError> {
    let mut multipart =
        multipart.map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))?;
    let mut upload: Option<Bytes> = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        if field.name() == Some("image") {
            upload = Some(field.bytes().await.map_err(multipart_error)?);
            break;
        }
    }
    let bytes = upload.ok_or_else(|| {
        ApiError::bad_request("missing_image", "multipart field \"image\" is required")
    })?;
    if bytes.len() > state.config.max_upload_bytes {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("upload exceeds {} bytes", state.config.max_upload_bytes),
        ));
    }
    let ext = image_extension(&bytes).ok_or_else(|| {
        ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "unsupported_media_type",
            "only PNG and JPEG images are accepted",
        )
    })?;
    let (Some(index), Some(corpus)) = (state.index.clone(), state.corpus.clone()) else {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "index_unavailable",
            "no index is loaded",
        ));
    };

    let provider = state.provider.clone();
    let k = state.config.k;
    let spooled = state.config.spool_uploads.is_some().then(|| bytes.clone());
    let (image, result) = blocking(move || {
        let image = provider.embed_image(&bytes)?;
        let result = index.query(&FusedQuery::image(image.clone(), k)?)?;
        Ok((image, result))
    })
    .await?;
    let candidates = payloads(&corpus, &result)?;

    for expired in state.sessions.purge_expired() {
        if let Some(path) = expired.lock().await.spool_path.take() {
            let _ = tokio::fs::remove_file(path).await;
        }
    }
    let ids = result.ranked.iter().map(|r| r.record_id.clone()).collect();
    let session_id = state.sessions.insert(Session::new(image, ids));
    if let (Some(dir), Some(bytes)) = (&state.config.spool_uploads, spooled) {
        let path = dir.join(format!("{session_id}.{ext}"));
        match tokio::fs::write(&path, &bytes).await {
            Ok(()) => {
                if let Some(slot) = state.sessions.get(&session_id) {
                    slot.lock().await.spool_path = Some(path);
                }
            }
            Err(e) => tracing::warn!(path = %path.display(), error = %e, "could not spool upload"),
        }
    }
    Ok(Json(
        json!({"session_id": session_id, "candidates": candidates}),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineRequest {
    draft_text: String,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    exclude_ids: Vec<String>,
}

async fn refine(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<RefineRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let slot = state
        .sessions
        .get(&id)
        .ok_or_else(|| ApiError::not_found("session_not_found", "unknown or expired session"))?;
    let Json(req) = body.map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))?;
    if req.draft_text.trim().is_empty() {
        return Err(ApiError::bad_request("empty_draft", "draft_text is empty"));
    }
    let alpha = req.alpha.unwrap_or(state.config.alpha);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ApiError::bad_request(
            "invalid_alpha",
            format!("alpha {alpha} outside [0, 1]"),
        ));
    }
    let (Some(index), Some(corpus)) = (state.index.clone(), state.corpus.clone()) else {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "index_unavailable",
            "no index is loaded",
        ));
    };

    let mut session = slot.lock().await;
    let mut excluded: BTreeSet<String> = session.excluded_ids.clone();
    excluded.extend(req.exclude_ids);
    let provider: Arc<dyn EmbeddingProvider> = state.provider.clone();
    let image = session.image.clone();
    let k = state.config.k;
    let exclusions = excluded.clone();
    let result = blocking(move || {
        let text = provider.embed_text(&req.draft_text)?;
        let q = FusedQuery::fused(image, text, alpha as f32, k)?.excluding(exclusions);
        Ok(index.query(&q)?)
    })
    .await?;
    let candidates = payloads(&corpus, &result)?;
    session.excluded_ids = excluded;
    session.last_results = result.ranked.iter().map(|r| r.record_id.clone()).collect();
    state.sessions.touch(&id, &mut session);
    Ok(Json(json!({"candidates": candidates})))
}

async fn chart(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let record = state
        .corpus
        .as_ref()
        .and_then(|c| c.get(&id))
        .ok_or_else(|| ApiError::not_found("chart_not_found", format!("no chart {id:?}")))?;
    Ok(Json(record).into_response())
}

async fn chart_image(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let record = state
        .corpus
        .as_ref()
        .and_then(|c| c.get(&id))
        .ok_or_else(|| ApiError::not_found("chart_not_found", format!("no chart {id:?}")))?;
    let Some(path) = resolve_image(&state.config.image_root, &record.image_ref) else {
        return Ok(Redirect::temporary(&record.image_ref).into_response());
    };
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ApiError::not_found("image_not_found", format!("image for {id:?} is missing"))
        } else {
            ApiError::internal(e.to_string())
        }
    })?;
    let content_type = match image_extension(&bytes) {
        Some("png") => "image/png",
        Some(_) => "image/jpeg",
        None => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let status = if state.index.is_some() {
        "ok"
    } else {
        "degraded"
    };
    Json(json!({
        "status": status,
        "index_size": state.index_size(),
        "provider_id": state.provider.provider_id(),
    }))
}

async fn guidelines(State(state): State<Arc<AppState>>) -> Json<Value> {
    if let Some(path) = &state.config.guidelines {
        match tokio::fs::read_to_string(path).await {
            Ok(content) => return Json(json!({"source": "file", "content": content})),
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "falling back to built-in guidelines")
            }
        }
    }
    Json(json!({"source": "builtin", "content": DEFAULT_GUIDELINES}))
}
