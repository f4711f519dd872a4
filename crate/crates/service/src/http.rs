//! JSON HTTP API.
//!
//! Store access is blocking file I/O, so every handler hops onto the
//! blocking pool; processing itself runs on separate worker threads.

use std::future::Future;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use fieldbabel_core::analytics::RatioMode;
use fieldbabel_core::calendar::list_crops;
use fieldbabel_core::vector::polygon_to_geojson;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bundle::{zip_entry, Manifest};
use crate::request::{is_request_id, AoiRequest, JobStatus, Submission};
use crate::service::{Service, ServiceError};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no request {id}"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        log::error!("internal error: {e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Submit(s) => ApiError::new(StatusCode::BAD_REQUEST, s.code(), s.to_string()),
            other => ApiError::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(svc: &Arc<Service>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> ApiResult<T> + Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc)).await.map_err(ApiError::internal)?
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    /// A GeoJSON object, or the same serialised as a string.
    geojson: Value,
    email: String,
    crop: String,
    year: i32,
    #[serde(default)]
    ratio_mode: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Submitted {
    pub request_id: String,
    pub status: JobStatus,
    pub status_url: String,
}

/// What clients may see of a request. The email address is never echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub request_id: String,
    pub status: JobStatus,
    pub message: Option<String>,
    pub crop: String,
    pub year: i32,
    pub ratio_mode: RatioMode,
    pub created_at: DateTime<Utc>,
    pub aoi: Value,
    pub scene_count: Option<usize>,
    pub bundle_url: Option<String>,
    pub timeseries_url: Option<String>,
}

fn view(req: &AoiRequest, manifest: Option<&Manifest>) -> StatusView {
    let id = req.id();
    let done = req.status == JobStatus::Done;
    StatusView {
        request_id: id.to_string(),
        status: req.status,
        message: req.message.clone(),
        crop: req.request.crop.clone(),
        year: req.request.year,
        ratio_mode: req.request.ratio_mode,
        created_at: req.request.created_at,
        aoi: serde_json::from_str(&polygon_to_geojson(&req.request.polygon)).unwrap_or(Value::Null),
        scene_count: manifest.map(|m| m.scenes.len()),
        bundle_url: done.then(|| format!("/api/requests/{id}/bundle.zip")),
        timeseries_url: done.then(|| format!("/api/requests/{id}/timeseries.json")),
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/requests", post(submit))
        .route("/api/requests/{id}", get(status))
        .route("/api/requests/{id}/bundle.zip", get(bundle))
        .route("/api/requests/{id}/timeseries.json", get(timeseries))
        .route("/api/crops", get(crops))
        .with_state(service)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    service: Arc<Service>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}

async fn submit(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<(StatusCode, Json<Submitted>)> {
    let body: SubmitBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))?;
    let ratio_mode = match body.ratio_mode.as_deref() {
        None => RatioMode::default(),
        Some(s) => s
            .parse()
            .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e))?,
    };
    let geojson = match body.geojson {
        Value::String(s) => s,
        other => other.to_string(),
    };
    let sub = Submission { geojson, email: body.email, crop: body.crop, year: body.year, ratio_mode };
    let stored = blocking(&svc, move |s| Ok(s.submit(&sub)?)).await?;
    let id = stored.id().to_string();
    Ok((
        StatusCode::CREATED,
        Json(Submitted { status_url: format!("/api/requests/{id}"), request_id: id, status: stored.status }),
    ))
}

fn lookup(s: &Service, id: &str) -> ApiResult<AoiRequest> {
    if !is_request_id(id) {
        return Err(ApiError::not_found(id));
    }
    s.get(id)?.ok_or_else(|| ApiError::not_found(id))
}

fn require_done(req: &AoiRequest) -> ApiResult<()> {
    match req.status {
        JobStatus::Done => Ok(()),
        JobStatus::Failed => Err(ApiError::new(
            StatusCode::CONFLICT,
            "conflict",
            format!("request failed: {}", req.message.as_deref().unwrap_or("unknown error")),
        )),
        s => Err(ApiError::new(StatusCode::CONFLICT, "conflict", format!("request is {s}; no bundle yet"))),
    }
}

async fn status(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<StatusView>> {
    blocking(&svc, move |s| {
        let req = lookup(s, &id)?;
        let manifest = match req.status {
            JobStatus::Done => std::fs::read(s.bundle_path(&id))
                .ok()
                .and_then(|zip| zip_entry(&zip, "manifest.json").ok())
                .and_then(|m| serde_json::from_slice::<Manifest>(&m).ok()),
            _ => None,
        };
        Ok(Json(view(&req, manifest.as_ref())))
    })
    .await
}

async fn bundle(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = blocking(&svc, move |s| {
        let req = lookup(s, &id)?;
        require_done(&req)?;
        let path = s.bundle_path(&id);
        std::fs::read(&path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/zip".to_string()),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"fieldbabel.zip\"".to_string()),
        ],
        Body::from(bytes),
    )
        .into_response())
}

async fn timeseries(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = blocking(&svc, move |s| {
        let req = lookup(s, &id)?;
        require_done(&req)?;
        let path = s.series_path(&id);
        std::fs::read(&path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], Body::from(bytes)).into_response())
}

#[derive(Serialize)]
struct CropView {
    name: &'static str,
    lpis_name: &'static str,
    /// `MM-DD` with the year offset relative to the reference year.
    start: String,
    start_year_offset: i32,
    end: String,
    end_year_offset: i32,
}

async fn crops() -> Json<Vec<CropView>> {
    Json(
        list_crops()
            .iter()
            .map(|c| CropView {
                name: c.english_name,
                lpis_name: c.lpis_name,
                start: format!("{:02}-{:02}", c.start_month_day.0, c.start_month_day.1),
                start_year_offset: c.start_year_offset,
                end: format!("{:02}-{:02}", c.end_month_day.0, c.end_month_day.1),
                end_year_offset: c.end_year_offset,
            })
            .collect(),
    )
}
