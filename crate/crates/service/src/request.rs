//! AOI requests and their submission rules.

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use fieldbabel_core::analytics::RatioMode;
use fieldbabel_core::calendar::find_crop;
use fieldbabel_core::vector::{parse_geojson_polygon, validate_aoi, GeoJsonError, Polygon};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Processing,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Pending => "pending",
            JobStatus::Processing => "processing",
            JobStatus::Done => "done",
            JobStatus::Failed => "failed",
        }
    }
}

impl std::fmt::Display for JobStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The immutable part of a request, as submitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewRequest {
    pub request_id: String,
    pub email: String,
    pub polygon: Polygon,
    pub crop: String,
    pub year: i32,
    pub ratio_mode: RatioMode,
    pub created_at: DateTime<Utc>,
}

/// A request together with its current processing state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiRequest {
    #[serde(flatten)]
    pub request: NewRequest,
    pub status: JobStatus,
    pub message: Option<String>,
    /// Set iff `status` is done.
    pub bundle_path: Option<PathBuf>,
    /// Worker currently holding the job (processing only).
    pub worker: Option<String>,
    /// Times processing was started, including attempts cut short by a crash.
    pub attempts: u32,
    pub notification: Option<String>,
}

impl AoiRequest {
    pub fn id(&self) -> &str {
        &self.request.request_id
    }
}

/// Rejected submission. `code()` is the machine-readable tag returned to
/// clients.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubmitError {
    #[error("invalid email address {0:?}")]
    InvalidEmail(String),
    #[error(transparent)]
    GeoJson(#[from] GeoJsonError),
    #[error(transparent)]
    Oversized(#[from] fieldbabel_core::vector::AoiError),
    #[error("unknown crop {0:?}")]
    UnknownCrop(String),
    #[error("year {0} is out of range")]
    InvalidYear(i32),
}

impl SubmitError {
    pub fn code(&self) -> &'static str {
        match self {
            SubmitError::InvalidEmail(_) => "invalid_email",
            SubmitError::GeoJson(GeoJsonError::Malformed(_)) => "invalid_geojson",
            SubmitError::GeoJson(GeoJsonError::NotSinglePolygon(_)) => "not_single_polygon",
            SubmitError::GeoJson(GeoJsonError::UnsupportedGeometryType(_)) => "unsupported_geometry",
            SubmitError::GeoJson(GeoJsonError::UnclosedRing(_)) => "unclosed_ring",
            SubmitError::GeoJson(GeoJsonError::InvalidPolygon(_)) => "invalid_polygon",
            SubmitError::Oversized(_) => "oversized_aoi",
            SubmitError::UnknownCrop(_) => "unknown_crop",
            SubmitError::InvalidYear(_) => "invalid_year",
        }
    }
}

/// One `@`, non-empty local part and domain, and a dot inside the domain.
pub fn validate_email(email: &str) -> Result<(), SubmitError> {
    let bad = || SubmitError::InvalidEmail(email.to_string());
    let (local, domain) = email.split_once('@').ok_or_else(bad)?;
    if local.is_empty() || domain.is_empty() || domain.contains('@') || !domain.contains('.') {
        return Err(bad());
    }
    if email.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(bad());
    }
    Ok(())
}

/// Raw submission fields as received from a client.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub geojson: String,
    pub email: String,
    pub crop: String,
    pub year: i32,
    pub ratio_mode: RatioMode,
}

/// Validate a submission and give it a fresh id. Checks run in a fixed
/// order: email, geometry, size, crop, year.
pub fn prepare(sub: &Submission, now: DateTime<Utc>) -> Result<NewRequest, SubmitError> {
    validate_email(&sub.email)?;
    let polygon = parse_geojson_polygon(&sub.geojson)?;
    validate_aoi(&polygon)?;
    let crop = find_crop(&sub.crop).map_err(|_| SubmitError::UnknownCrop(sub.crop.clone()))?;
    crop.window(sub.year).map_err(|_| SubmitError::InvalidYear(sub.year))?;
    Ok(NewRequest {
        request_id: new_request_id(),
        email: sub.email.clone(),
        polygon,
        crop: crop.english_name.to_string(),
        year: sub.year,
        ratio_mode: sub.ratio_mode,
        created_at: now,
    })
}

/// 128 random bits from the OS-seeded CSPRNG, hex encoded. The id doubles as
/// the download capability.
pub fn new_request_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Whether `s` has the shape of an id produced by [`new_request_id`].
pub fn is_request_id(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}
