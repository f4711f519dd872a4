//! Seeded synthetic inputs: speckled intensity rasters and complete raw
//! scenes (DN GeoTIFFs plus sidecar) for demos, benchmarks and tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Pass, Polarization, SceneMetadata};
use crate::raster::{write_geotiff_u16, GeoTiffError, GridGeometry, Raster, DEFAULT_NODATA};
use crate::sar::CalibrationLut;

/// Fully developed `looks`-look intensity speckle with the given mean:
/// a Gamma(looks, mean) draw per pixel.
pub fn speckle_raster(geometry: GridGeometry, mean: f64, looks: u32, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let looks = looks.max(1);
    let values = (0..geometry.len())
        .map(|_| {
            let sum: f64 = (0..looks).map(|_| -(1.0 - rng.random::<f64>()).ln()).sum();
            (mean * sum / looks as f64) as f32
        })
        .collect();
    Raster::new(geometry, values, DEFAULT_NODATA).expect("finite speckle")
}

/// Description of a raw dual-pol scene to synthesise.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub scene_id: String,
    pub acquired_at: DateTime<Utc>,
    pub pass: Pass,
    pub relative_orbit: u32,
    /// Source grid of the DN rasters.
    pub grid: GridGeometry,
    /// Mean σ⁰ per polarization, dB.
    pub vv_db: f64,
    pub vh_db: f64,
    /// Constant calibration gain.
    pub gain: f64,
    /// Apply `looks`-look speckle with this seed; `None` for constant DN.
    pub speckle: Option<(u32, u64)>,
}

#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub vv: PathBuf,
    pub vh: PathBuf,
    pub sidecar: PathBuf,
}

impl SyntheticScene {
    /// Digital numbers reproducing `db` after calibration with `gain`.
    fn dn(&self, db: f64, seed_offset: u64) -> Vec<u16> {
        let sigma0 = 10f64.powf(db / 10.0);
        let field = match self.speckle {
            Some((looks, seed)) => speckle_raster(self.grid, sigma0, looks, seed.wrapping_add(seed_offset)).into_values(),
            None => vec![sigma0 as f32; self.grid.len()],
        };
        field
            .into_iter()
            .map(|s| (self.gain * (s as f64).sqrt()).round().clamp(1.0, u16::MAX as f64) as u16)
            .collect()
    }

    pub fn metadata(&self) -> SceneMetadata {
        let lut = CalibrationLut::constant(self.gain).expect("positive gain");
        SceneMetadata {
            scene_id: self.scene_id.clone(),
            acquired_at: self.acquired_at,
            pass: self.pass,
            relative_orbit: self.relative_orbit,
            calibration: BTreeMap::from([(Polarization::VV, lut.clone()), (Polarization::VH, lut)]),
        }
    }

    /// Write `<id>_VV.tif`, `<id>_VH.tif` and `<id>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<SceneFiles, GeoTiffError> {
        let files = SceneFiles {
            vv: dir.join(format!("{}_VV.tif", self.scene_id)),
            vh: dir.join(format!("{}_VH.tif", self.scene_id)),
            sidecar: dir.join(format!("{}.json", self.scene_id)),
        };
        write_geotiff_u16(&self.grid, &self.dn(self.vv_db, 0), Some(0), &files.vv)?;
        write_geotiff_u16(&self.grid, &self.dn(self.vh_db, 1), Some(0), &files.vh)?;
        let json = serde_json::to_string_pretty(&self.metadata()).expect("metadata serializes");
        std::fs::write(&files.sidecar, json)
            .map_err(|source| GeoTiffError::Io { path: files.sidecar.display().to_string(), source })?;
        Ok(files)
    }
}
