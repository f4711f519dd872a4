use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::CatalogError;
use crate::sar::CalibrationLut;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    VV,
    VH,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::VV, Polarization::VH];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarization::VV => "VV",
            Polarization::VH => "VH",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Orbit direction at acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Pass {
    Ascending,
    Descending,
}

impl Pass {
    pub fn as_str(self) -> &'static str {
        match self {
            Pass::Ascending => "ASCENDING",
            Pass::Descending => "DESCENDING",
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Metadata shipped next to the raw DN rasters of one acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMetadata {
    pub scene_id: String,
    pub acquired_at: DateTime<Utc>,
    pub pass: Pass,
    pub relative_orbit: u32,
    pub calibration: BTreeMap<Polarization, CalibrationLut>,
}

impl SceneMetadata {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let meta: SceneMetadata =
            serde_json::from_str(text).map_err(|e| CatalogError::InvalidSidecar(e.to_string()))?;
        validate_scene_id(&meta.scene_id)?;
        Ok(meta)
    }

    pub fn read(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }
}

/// Scene ids name directories, so they are restricted to a portable,
/// traversal-free alphabet.
pub fn validate_scene_id(id: &str) -> Result<(), CatalogError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(CatalogError::InvalidSceneId(id.to_string()))
    }
}
