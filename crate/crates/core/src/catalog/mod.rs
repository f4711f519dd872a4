//! On-disk catalog of analysis-ready scenes.
//!
//! Layout under the catalog root:
//!
//! ```text
//! catalog.json          analysis grid and filter parameters (fixed at creation)
//! scenes.jsonl          append-only journal of SceneRecord entries
//! <scene_id>/VV.tif     σ⁰ dB layers on the analysis grid
//! <scene_id>/VH.tif
//! .staging/             per-ingest scratch directories
//! .lock                 held exclusively while ingesting
//! ```
//!
//! Layers are written into a staging directory and renamed into place before
//! the journal entry is appended, so a scene is either fully present or
//! absent from the journal. Leftovers from interrupted ingests are swept on
//! the next ingest.

mod sidecar;

pub use sidecar::{validate_scene_id, Pass, Polarization, SceneMetadata};

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::SceneLayers;
use crate::journal::{Journal, JournalError};
use crate::raster::{
    read_geotiff, resample_bilinear, write_geotiff, BBox, GeoTiffError, GridGeometry, Raster, RasterError,
    ANALYSIS_PIXEL_SIZE,
};
use crate::sar::{calibrate_sigma0, lee_sigma_filter, to_db, SarError, SpeckleFilterParams};
use crate::vector::projection::{Crs, UnsupportedCrs};

const CONFIG_FILE: &str = "catalog.json";
const JOURNAL_FILE: &str = "scenes.jsonl";
const LOCK_FILE: &str = ".lock";
const STAGING_DIR: &str = ".staging";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scene {0} is already in the catalog")]
    Duplicate(String),
    #[error("missing {0} polarization")]
    MissingPolarization(Polarization),
    #[error("invalid scene id {0:?}")]
    InvalidSceneId(String),
    #[error("invalid sidecar: {0}")]
    InvalidSidecar(String),
    #[error("invalid catalog configuration: {0}")]
    InvalidConfig(String),
    #[error("ingest of {scene_id} failed: {message}")]
    Pipeline { scene_id: String, message: String },
    #[error("catalog corrupt: {0}")]
    Corrupt(String),
    #[error("scene {scene_id} has no {polarization} layer")]
    LayerUnavailable { scene_id: String, polarization: Polarization },
    #[error("interval start {start} is after end {end}")]
    InvalidInterval { start: DateTime<Utc>, end: DateTime<Utc> },
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Crs(#[from] UnsupportedCrs),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io { path: path.to_path_buf(), source }
}

/// The common analysis grid: CRS, a pixel-corner anchor and square pitch.
/// Every stored layer is a window of this infinite lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisGrid {
    pub crs: u32,
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size: f64,
}

impl AnalysisGrid {
    /// 10 m lattice anchored at the CRS origin.
    pub fn new(crs: u32) -> Self {
        Self { crs, origin_x: 0.0, origin_y: 0.0, pixel_size: ANALYSIS_PIXEL_SIZE }
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        Crs::from_epsg(self.crs)?;
        if !(self.pixel_size.is_finite() && self.pixel_size > 0.0)
            || !self.origin_x.is_finite()
            || !self.origin_y.is_finite()
        {
            return Err(CatalogError::InvalidConfig(format!("bad analysis grid {self:?}")));
        }
        Ok(())
    }

    /// Smallest lattice-aligned grid covering `extent` (map units).
    pub fn cover(&self, extent: &BBox) -> Result<GridGeometry, RasterError> {
        let ps = self.pixel_size;
        let snap = |v: f64| {
            let r = v.round();
            if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
                r
            } else {
                v
            }
        };
        let c0 = snap((extent.min_x - self.origin_x) / ps).floor();
        let c1 = snap((extent.max_x - self.origin_x) / ps).ceil();
        let r0 = snap((self.origin_y - extent.max_y) / ps).floor();
        let r1 = snap((self.origin_y - extent.min_y) / ps).ceil();
        GridGeometry::new(
            ((c1 - c0) as usize).max(1),
            ((r1 - r0) as usize).max(1),
            self.origin_x + c0 * ps,
            self.origin_y - r0 * ps,
            ps,
            ps,
            self.crs,
        )
    }
}

/// Fixed per-catalog processing configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogConfig {
    pub grid: AnalysisGrid,
    pub filter: SpeckleFilterParams,
}

impl CatalogConfig {
    pub fn new(grid: AnalysisGrid) -> Self {
        Self { grid, filter: SpeckleFilterParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneStatus {
    Ingested,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub acquired_at: DateTime<Utc>,
    pub pass: Pass,
    pub relative_orbit: u32,
    /// Lon/lat rectangle of the source raster.
    pub footprint_bbox: BBox,
    pub polarizations: Vec<Polarization>,
    /// Paths relative to the catalog root.
    pub product_paths: BTreeMap<Polarization, PathBuf>,
    pub status: SceneStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SceneRecord {
    pub fn is_ingested(&self) -> bool {
        self.status == SceneStatus::Ingested
    }
}

/// Raw inputs of one acquisition. A `None` layer is reported as a missing
/// polarization.
#[derive(Debug, Clone, Copy)]
pub struct IngestRequest<'a> {
    pub vv: Option<&'a Path>,
    pub vh: Option<&'a Path>,
    pub sidecar: &'a Path,
}

#[derive(Debug)]
pub struct SceneCatalog {
    root: PathBuf,
    config: CatalogConfig,
    entries: RwLock<Vec<SceneRecord>>,
}

impl SceneCatalog {
    /// Create a new catalog at `root`, which must not already hold one.
    pub fn create(root: impl AsRef<Path>, config: CatalogConfig) -> Result<Self, CatalogError> {
        let root = root.as_ref().to_path_buf();
        config.grid.validate()?;
        config.filter.validate().map_err(|e| CatalogError::InvalidConfig(e.to_string()))?;
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let cfg_path = root.join(CONFIG_FILE);
        if cfg_path.exists() {
            return Err(CatalogError::InvalidConfig(format!("{} already exists", cfg_path.display())));
        }
        let text = serde_json::to_string_pretty(&config).expect("config serializes");
        write_durable(&cfg_path, text.as_bytes())?;
        Self::open(root)
    }

    /// Open an existing catalog and load its journal.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let root = root.as_ref().to_path_buf();
        let cfg_path = root.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
        let config: CatalogConfig =
            serde_json::from_str(&text).map_err(|e| CatalogError::InvalidConfig(e.to_string()))?;
        config.grid.validate()?;
        let entries = Journal::<SceneRecord>::read_all(root.join(JOURNAL_FILE))?;
        Ok(Self { root, config, entries: RwLock::new(entries) })
    }

    /// Open, creating with `config` when no catalog exists yet.
    pub fn open_or_create(root: impl AsRef<Path>, config: CatalogConfig) -> Result<Self, CatalogError> {
        if root.as_ref().join(CONFIG_FILE).exists() {
            Self::open(root)
        } else {
            Self::create(root, config)
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &CatalogConfig {
        &self.config
    }

    /// Re-read the journal to pick up entries appended by other processes.
    pub fn reload(&self) -> Result<(), CatalogError> {
        let entries = Journal::<SceneRecord>::read_all(self.root.join(JOURNAL_FILE))?;
        *self.entries.write().expect("catalog lock poisoned") = entries;
        Ok(())
    }

    /// Every journal entry in append order, failed ones included.
    pub fn entries(&self) -> Vec<SceneRecord> {
        self.entries.read().expect("catalog lock poisoned").clone()
    }

    /// The ingested record for `scene_id`, if any.
    pub fn get(&self, scene_id: &str) -> Option<SceneRecord> {
        self.entries
            .read()
            .expect("catalog lock poisoned")
            .iter()
            .find(|r| r.scene_id == scene_id && r.is_ingested())
            .cloned()
    }

    /// Run the preprocessing chain on one acquisition and record it.
    ///
    /// Pipeline failures are journaled with status `failed` and returned as
    /// [`CatalogError::Pipeline`]. Input validation errors (sidecar, missing
    /// polarization, duplicates) leave the catalog untouched.
    pub fn ingest_scene(&self, req: IngestRequest<'_>) -> Result<SceneRecord, CatalogError> {
        let meta = SceneMetadata::read(req.sidecar)?;
        let vv = req.vv.ok_or(CatalogError::MissingPolarization(Polarization::VV))?;
        let vh = req.vh.ok_or(CatalogError::MissingPolarization(Polarization::VH))?;
        for pol in Polarization::BOTH {
            if !meta.calibration.contains_key(&pol) {
                return Err(CatalogError::MissingPolarization(pol));
            }
        }

        let lock_path = self.root.join(LOCK_FILE);
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(&lock_path).map_err(io_err(&lock_path))?;
        lock.lock().map_err(io_err(&lock_path))?;

        let (mut journal, existing) = Journal::<SceneRecord>::open(self.root.join(JOURNAL_FILE))?;
        let duplicate = existing.iter().any(|r| r.scene_id == meta.scene_id && r.is_ingested());
        *self.entries.write().expect("catalog lock poisoned") = existing;
        if duplicate {
            return Err(CatalogError::Duplicate(meta.scene_id));
        }

        let staging_root = self.root.join(STAGING_DIR);
        if staging_root.exists() {
            fs::remove_dir_all(&staging_root).map_err(io_err(&staging_root))?;
        }
        fs::create_dir_all(&staging_root).map_err(io_err(&staging_root))?;
        let staging = staging_root.join(&meta.scene_id);

        let record = match self.process(&meta, vv, vh, &staging) {
            Ok((footprint, product_paths)) => {
                let dest = self.root.join(&meta.scene_id);
                if dest.exists() {
                    // Orphan of an interrupted or failed earlier ingest.
                    fs::remove_dir_all(&dest).map_err(io_err(&dest))?;
                }
                fs::rename(&staging, &dest).map_err(io_err(&dest))?;
                sync_dir(&self.root)?;
                SceneRecord {
                    scene_id: meta.scene_id.clone(),
                    acquired_at: meta.acquired_at,
                    pass: meta.pass,
                    relative_orbit: meta.relative_orbit,
                    footprint_bbox: footprint,
                    polarizations: Polarization::BOTH.to_vec(),
                    product_paths,
                    status: SceneStatus::Ingested,
                    message: None,
                }
            }
            Err(message) => {
                let _ = fs::remove_dir_all(&staging);
                let record = SceneRecord {
                    scene_id: meta.scene_id.clone(),
                    acquired_at: meta.acquired_at,
                    pass: meta.pass,
                    relative_orbit: meta.relative_orbit,
                    footprint_bbox: BBox::new(0.0, 0.0, 0.0, 0.0),
                    polarizations: Polarization::BOTH.to_vec(),
                    product_paths: BTreeMap::new(),
                    status: SceneStatus::Failed,
                    message: Some(message.clone()),
                };
                journal.append(&record)?;
                self.entries.write().expect("catalog lock poisoned").push(record);
                return Err(CatalogError::Pipeline { scene_id: meta.scene_id, message });
            }
        };
        journal.append(&record)?;
        self.entries.write().expect("catalog lock poisoned").push(record.clone());
        Ok(record)
    }

    /// Calibrate, filter, resample and convert both layers into `staging`.
    fn process(
        &self,
        meta: &SceneMetadata,
        vv: &Path,
        vh: &Path,
        staging: &Path,
    ) -> Result<(BBox, BTreeMap<Polarization, PathBuf>), String> {
        fs::create_dir_all(staging).map_err(|e| format!("{}: {e}", staging.display()))?;
        let mut footprint = None;
        let mut target: Option<GridGeometry> = None;
        let mut paths = BTreeMap::new();
        for (pol, path) in [(Polarization::VV, vv), (Polarization::VH, vh)] {
            let dn = read_geotiff(path).map_err(|e: GeoTiffError| format!("{pol}: {e}"))?;
            let src = *dn.geometry();
            if src.crs != self.config.grid.crs {
                return Err(format!(
                    "{pol}: raster is EPSG:{} but the analysis grid is EPSG:{}",
                    src.crs, self.config.grid.crs
                ));
            }
            let target = match target {
                Some(t) => t,
                None => {
                    let crs = Crs::from_epsg(src.crs).map_err(|e| e.to_string())?;
                    footprint = Some(crs.bbox_to_lonlat(&src.extent()));
                    *target.insert(self.config.grid.cover(&src.extent()).map_err(|e| e.to_string())?)
                }
            };
            let lut = &meta.calibration[&pol];
            let sigma0 = calibrate_sigma0(&dn, lut).map_err(|e: SarError| format!("{pol}: {e}"))?;
            let filtered = lee_sigma_filter(&sigma0, &self.config.filter).map_err(|e| format!("{pol}: {e}"))?;
            let resampled = resample_bilinear(&filtered, &target).map_err(|e| format!("{pol}: {e}"))?;
            let db = to_db(&resampled);
            let rel = PathBuf::from(&meta.scene_id).join(format!("{pol}.tif"));
            let file = staging.join(format!("{pol}.tif"));
            write_geotiff(&db, &file).map_err(|e| format!("{pol}: {e}"))?;
            File::open(&file).and_then(|f| f.sync_all()).map_err(|e| format!("{}: {e}", file.display()))?;
            paths.insert(pol, rel);
        }
        sync_dir(staging).map_err(|e| e.to_string())?;
        Ok((footprint.expect("two layers processed"), paths))
    }

    /// Ingested scenes whose footprint intersects `bbox` (lon/lat) and whose
    /// acquisition time lies in `[start, end]`, ordered by time then id.
    pub fn query_scenes(
        &self,
        bbox: &BBox,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    ) -> Result<Vec<SceneRecord>, CatalogError> {
        if start > end {
            return Err(CatalogError::InvalidInterval { start, end });
        }
        let mut out: Vec<SceneRecord> = self
            .entries
            .read()
            .expect("catalog lock poisoned")
            .iter()
            .filter(|r| {
                r.is_ingested()
                    && r.footprint_bbox.intersects(bbox)
                    && r.acquired_at >= start
                    && r.acquired_at <= end
            })
            .cloned()
            .collect();
        out.sort_by(|a, b| a.acquired_at.cmp(&b.acquired_at).then_with(|| a.scene_id.cmp(&b.scene_id)));
        Ok(out)
    }

    /// Load a stored dB layer, optionally subset to a lon/lat rectangle.
    pub fn get_raster(
        &self,
        record: &SceneRecord,
        polarization: Polarization,
        bbox: Option<&BBox>,
    ) -> Result<Raster, CatalogError> {
        let rel = record.product_paths.get(&polarization).filter(|_| record.is_ingested()).ok_or_else(|| {
            CatalogError::LayerUnavailable { scene_id: record.scene_id.clone(), polarization }
        })?;
        let path = self.root.join(rel);
        if !path.is_file() {
            return Err(CatalogError::Corrupt(format!(
                "layer {} of scene {} is missing",
                path.display(),
                record.scene_id
            )));
        }
        let raster = read_geotiff(&path).map_err(|e| CatalogError::Corrupt(e.to_string()))?;
        match bbox {
            None => Ok(raster),
            Some(b) => {
                let crs = Crs::from_epsg(raster.geometry().crs)?;
                Ok(raster.subset_bbox(&crs.bbox_from_lonlat(b))?)
            }
        }
    }

    /// Both layers of a scene, ready for time-series extraction.
    pub fn scene_layers(&self, record: &SceneRecord, bbox: Option<&BBox>) -> Result<SceneLayers, CatalogError> {
        Ok(SceneLayers {
            scene_id: record.scene_id.clone(),
            acquired_at: record.acquired_at,
            vv_db: self.get_raster(record, Polarization::VV, bbox)?,
            vh_db: self.get_raster(record, Polarization::VH, bbox)?,
        })
    }
}

fn write_durable(path: &Path, bytes: &[u8]) -> Result<(), CatalogError> {
    let tmp = path.with_extension("tmp");
    {
        use std::io::Write;
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    if let Some(parent) = path.parent() {
        sync_dir(parent)?;
    }
    Ok(())
}

fn sync_dir(dir: &Path) -> Result<(), CatalogError> {
    File::open(dir).and_then(|f| f.sync_all()).map_err(io_err(dir))
}
