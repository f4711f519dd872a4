//! TOML service configuration.
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use fieldbabel_core::catalog::{AnalysisGrid, CatalogConfig};
use fieldbabel_core::sar::SpeckleFilterParams;
use fieldbabel_core::vector::ShapefileColumns;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qgis::ColorRanges;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Job journal, worker leases and finished bundles live here.
    pub data_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_poll_ms")]
    pub poll_interval_ms: u64,
    /// Prefix for download links in notifications; defaults to `http://<bind>`.
    #[serde(default)]
    pub public_base_url: Option<String>,
    /// Inward buffer applied to parcels before zonal statistics.
    #[serde(default = "default_erosion")]
    pub erosion_m: f64,
    pub catalog: CatalogSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub lpis: Option<LpisSection>,
    #[serde(default)]
    pub color_ranges: ColorRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSection {
    pub root: PathBuf,
    pub grid: AnalysisGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub window: usize,
    pub target_window: usize,
    pub looks: u32,
    pub sigma: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { window: 7, target_window: 3, looks: 1, sigma: 0.9 }
    }
}

impl FilterSection {
    pub fn params(&self) -> Result<SpeckleFilterParams, ConfigError> {
        SpeckleFilterParams::new(self.window, self.target_window, self.looks, self.sigma)
            .map_err(|e| ConfigError::Invalid(format!("filter: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpisSection {
    /// The `.shp` file; the `.dbf` sibling is found by extension.
    pub path: PathBuf,
    #[serde(default)]
    pub columns: ShapefileColumns,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_workers() -> usize {
    1
}
fn default_poll_ms() -> u64 {
    500
}
fn default_erosion() -> f64 {
    fieldbabel_core::analytics::DEFAULT_EROSION_M
}

impl ServiceConfig {
    /// Minimal configuration rooted at `data_dir`, used by tests and tools.
    pub fn new(data_dir: impl Into<PathBuf>, catalog_root: impl Into<PathBuf>, grid: AnalysisGrid) -> Self {
        Self {
            bind: default_bind(),
            data_dir: data_dir.into(),
            workers: default_workers(),
            poll_interval_ms: default_poll_ms(),
            public_base_url: None,
            erosion_m: default_erosion(),
            catalog: CatalogSection { root: catalog_root.into(), grid },
            filter: FilterSection::default(),
            lpis: None,
            color_ranges: ColorRanges::default(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg: ServiceConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        fix(&mut self.catalog.root);
        if let Some(l) = &mut self.lpis {
            fix(&mut l.path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if !(self.erosion_m.is_finite() && self.erosion_m >= 0.0) {
            return Err(ConfigError::Invalid(format!("erosion_m {} must be ≥ 0", self.erosion_m)));
        }
        self.catalog.grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.filter.params()?;
        self.color_ranges.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    pub fn catalog_config(&self) -> Result<CatalogConfig, ConfigError> {
        Ok(CatalogConfig { grid: self.catalog.grid, filter: self.filter.params()? })
    }

    pub fn base_url(&self) -> String {
        self.public_base_url
            .clone()
            .unwrap_or_else(|| format!("http://{}", self.bind))
            .trim_end_matches('/')
            .to_string()
    }
}
