//! The `/v1` HTTP API.
//!
//! | method | path | success |
//! |---|---|---|
//! | POST | `/v1/sessions` `{participant_alias}` | 201 session |
//! | GET | `/v1/sessions` | 200 `{sessions: [id]}` |
//! | GET | `/v1/sessions/{id}` | 200 session with history |
//! | POST | `/v1/sessions/{id}/phase` `{target}` | 200 session |
//! | POST | `/v1/sessions/{id}/drafts` multipart `image` | 201 artifact ref |
//! | POST | `/v1/sessions/{id}/edges` `{draft_id, detector?, threshold?}` | 201 artifact ref |
//! | POST | `/v1/sessions/{id}/generate` `{edge_id, prompt, negative_prompt?, params?, backend?}` | 201 iteration record |
//! | POST | `/v1/sessions/{id}/masks` `{artwork_id, strokes}` or multipart `artwork_id` + `mask` | 201 artifact ref |
//! | POST | `/v1/sessions/{id}/inpaint` `{artwork_id, mask_id, prompt, negative_prompt?, params?, backend?}` | 201 iteration record |
//! | GET | `/v1/sessions/{id}/archive` | 200 tar archive |
//! | POST | `/v1/archives` tar body | 201 session |
//! | GET | `/v1/artifacts/{hash}` | 200 bytes |
//! | GET | `/v1/backends` | 200 descriptors and detectors |
//! | GET | `/v1/privacy/audit` | 200 guard state and violations |
//! | GET | `/v1/healthz` | 200 |
//!
//! Errors are `{"code": ..., "message": ...}` with 400 for validation,
//! 403 for privacy refusals, 404 for unknown ids, 409 for phase conflicts,
//! 422 for unusable masks and safety rejections, 503 (with `Retry-After`)
//! when a backend is saturated, and 500 otherwise.

use std::future::Future;
use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::studio::{
    CreateSessionRequest, EdgeRequest, ErrorClass, GenerateRequest, InpaintRequest, PhaseRequest, StrokeMaskRequest, Studio, StudioError,
};

pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    retry_after: Option<u64>,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "InvalidRequest".into(), message: message.into(), retry_after: None }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "Internal".into(), message: message.into(), retry_after: None }
    }

    fn from_studio(e: StudioError, retry_after: u64) -> Self {
        let status = match e.class() {
            ErrorClass::Invalid => StatusCode::BAD_REQUEST,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::Forbidden => StatusCode::FORBIDDEN,
            ErrorClass::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!("{e}");
        }
        let retry_after = (status == StatusCode::SERVICE_UNAVAILABLE).then_some(retry_after);
        ApiError { status, code: e.code().into(), message: e.to_string(), retry_after }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response();
        if let Some(secs) = self.retry_after {
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        resp
    }
}

type ApiResult = Result<Response, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}

/// Runs a studio call on the blocking pool.
fn run<T, F>(studio: &Arc<Studio>, retry_hint: Option<String>, f: F) -> impl Future<Output = Result<T, ApiError>>
where
    T: Send + 'static,
    F: FnOnce(&Studio) -> Result<T, StudioError> + Send + 'static,
{
    let studio = studio.clone();
    async move {
        let s = studio.clone();
        match tokio::task::spawn_blocking(move || f(&s)).await {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(e)) => Err(ApiError::from_studio(e, studio.queue_retry_after(retry_hint.as_deref()))),
            Err(e) => Err(ApiError::internal(format!("worker failed: {e}"))),
        }
    }
}

fn created(v: impl Serialize) -> Response {
    (StatusCode::CREATED, Json(v)).into_response()
}

fn ok(v: impl Serialize) -> Response {
    (StatusCode::OK, Json(v)).into_response()
}

pub fn router(studio: Arc<Studio>) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/phase", post(advance_phase))
        .route("/v1/sessions/{id}/drafts", post(upload_draft))
        .route("/v1/sessions/{id}/edges", post(extract_edges))
        .route("/v1/sessions/{id}/generate", post(generate))
        .route("/v1/sessions/{id}/masks", post(add_mask))
        .route("/v1/sessions/{id}/inpaint", post(inpaint))
        .route("/v1/sessions/{id}/archive", get(export_archive))
        .route("/v1/archives", post(import_archive))
        .route("/v1/artifacts/{hash}", get(get_artifact))
        .route("/v1/backends", get(backends))
        .route("/v1/privacy/audit", get(privacy_audit))
        .fallback(|| async {
            ApiError { status: StatusCode::NOT_FOUND, code: "NotFound".into(), message: "no such endpoint".into(), retry_after: None }
        })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(studio)
}

async fn healthz() -> Response {
    ok(json!({"status": "ok"}))
}

async fn create_session(State(st): State<Arc<Studio>>, body: Bytes) -> ApiResult {
    let req: CreateSessionRequest = parse(&body)?;
    let s = run(&st, None, move |st| st.create_session(&req.participant_alias)).await?;
    Ok(created(s))
}

async fn list_sessions(State(st): State<Arc<Studio>>) -> ApiResult {
    let ids = run(&st, None, |st| st.session_ids()).await?;
    Ok(ok(json!({"sessions": ids})))
}

async fn get_session(State(st): State<Arc<Studio>>, Path(id): Path<String>) -> ApiResult {
    Ok(ok(run(&st, None, move |st| st.session(&id)).await?))
}

async fn advance_phase(State(st): State<Arc<Studio>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: PhaseRequest = parse(&body)?;
    Ok(ok(run(&st, None, move |st| st.advance_phase(&id, &req.target)).await?))
}

struct Upload {
    bytes: Bytes,
    content_type: Option<String>,
}

async fn multipart_fields(mut mp: Multipart) -> Result<Vec<(String, Upload)>, ApiError> {
    let mut out = Vec::new();
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::bad_request(format!("multipart: {e}")))? {
        let name = field.name().unwrap_or_default().to_string();
        let content_type = field.content_type().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(format!("multipart: {e}")))?;
        out.push((name, Upload { bytes, content_type }));
    }
    Ok(out)
}

fn take(fields: &mut Vec<(String, Upload)>, names: &[&str]) -> Option<Upload> {
    let i = fields.iter().position(|(n, _)| names.contains(&n.as_str()))?;
    Some(fields.remove(i).1)
}

async fn upload_draft(State(st): State<Arc<Studio>>, Path(id): Path<String>, mp: Result<Multipart, MultipartRejection>) -> ApiResult {
    let mp = mp.map_err(|e| ApiError::bad_request(format!("expected multipart/form-data: {e}")))?;
    let mut fields = multipart_fields(mp).await?;
    let upload = take(&mut fields, &["image", "file", "draft"]).ok_or_else(|| ApiError::bad_request("missing `image` field"))?;
    let r = run(&st, None, move |st| st.upload_draft(&id, &upload.bytes, upload.content_type.as_deref())).await?;
    Ok(created(r))
}

async fn extract_edges(State(st): State<Arc<Studio>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: EdgeRequest = parse(&body)?;
    Ok(created(run(&st, None, move |st| st.extract_edges(&id, req)).await?))
}

async fn generate(State(st): State<Arc<Studio>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: GenerateRequest = parse(&body)?;
    let hint = req.backend.clone();
    Ok(created(run(&st, hint, move |st| st.generate(&id, req)).await?))
}

async fn add_mask(State(st): State<Arc<Studio>>, Path(id): Path<String>, headers: HeaderMap, request: Request) -> ApiResult {
    let is_multipart = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.to_ascii_lowercase().starts_with("multipart/form-data"));
    let r = if is_multipart {
        let mp = Multipart::from_request(request, &()).await.map_err(|e| ApiError::bad_request(e.to_string()))?;
        let mut fields = multipart_fields(mp).await?;
        let artwork = take(&mut fields, &["artwork_id"]).ok_or_else(|| ApiError::bad_request("missing `artwork_id` field"))?;
        let artwork = String::from_utf8(artwork.bytes.to_vec()).map_err(|_| ApiError::bad_request("artwork_id is not UTF-8"))?;
        let mask = take(&mut fields, &["mask", "image", "file"]).ok_or_else(|| ApiError::bad_request("missing `mask` field"))?;
        run(&st, None, move |st| st.add_mask_png(&id, artwork.trim(), &mask.bytes)).await?
    } else {
        let body = to_bytes(request.into_body(), MAX_BODY_BYTES).await.map_err(|e| ApiError::bad_request(e.to_string()))?;
        let req: StrokeMaskRequest = parse(&body)?;
        run(&st, None, move |st| st.add_mask_strokes(&id, req)).await?
    };
    Ok(created(r))
}

async fn inpaint(State(st): State<Arc<Studio>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: InpaintRequest = parse(&body)?;
    let hint = req.backend.clone();
    Ok(created(run(&st, hint, move |st| st.inpaint(&id, req)).await?))
}

async fn export_archive(State(st): State<Arc<Studio>>, Path(id): Path<String>) -> ApiResult {
    let name = format!("attachment; filename=\"{id}.tar\"");
    let bytes = run(&st, None, move |st| st.export_session(&id)).await?;
    let mut resp = Response::new(Body::from(bytes));
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/x-tar"));
    if let Ok(v) = HeaderValue::from_str(&name) {
        resp.headers_mut().insert(header::CONTENT_DISPOSITION, v);
    }
    Ok(resp)
}

async fn import_archive(State(st): State<Arc<Studio>>, body: Bytes) -> ApiResult {
    Ok(created(run(&st, None, move |st| st.import_session(&body)).await?))
}

async fn get_artifact(State(st): State<Arc<Studio>>, Path(hash): Path<String>) -> ApiResult {
    let (bytes, media_type) = run(&st, None, move |st| st.artifact(&hash)).await?;
    let mut resp = Response::new(Body::from(bytes));
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(media_type));
    resp.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("private, max-age=31536000, immutable"));
    Ok(resp)
}

async fn backends(State(st): State<Arc<Studio>>) -> Response {
    ok(json!({"backends": st.backends(), "detectors": st.detectors()}))
}

async fn privacy_audit(State(st): State<Arc<Studio>>) -> Response {
    ok(json!({"active": st.guard().is_active(), "violations": st.privacy_violations()}))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    studio: Arc<Studio>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(studio)).with_graceful_shutdown(shutdown).await
}
