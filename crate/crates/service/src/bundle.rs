//! Result bundle for one request.
//!
//! Layout inside the zip:
//!
//! ```text
//! manifest.json
//! project.qgs
//! scenes/<YYYYMMDD>_<orbit>_<PASS>.tif   3-band VV / VH / ratio composites
//! parcels/parcels.{shp,shx,dbf}
//! timeseries/<parcel_id>.csv
//! ```
//!
//! The archive depends only on the catalog contents and the request
//! parameters: entries are sorted, timestamps fixed, and the request id,
//! email and submission time are left out.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use fieldbabel_core::analytics::{
    align_growth_stages, build_field_time_series, composite_rgb, write_time_series_csv, AnalyticsError, RatioMode,
    SceneLayers, TimeSeries, TimeSeriesSample,
};
use fieldbabel_core::calendar::{find_crop, CalendarError};
use fieldbabel_core::catalog::{CatalogError, SceneCatalog, SceneRecord};
use fieldbabel_core::raster::{write_geotiff_bands, BBox, GeoTiffError};
use fieldbabel_core::vector::{
    clip_parcels_bbox, polygon_to_geojson, write_parcels_shapefile, FieldParcel, ShapefileColumns, ShapefileError,
    ShapefilePaths,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::CompressionMethod;

use crate::qgis::{build_project_descriptor, ColorRanges, LayerRole, ProjectLayer};
use crate::request::NewRequest;

pub const MANIFEST_FORMAT: &str = "fieldbabel-bundle/1";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("scene {scene_id}: {message}")]
    Scene { scene_id: String, message: String },
    #[error("parcel {parcel_id}: {source}")]
    Parcel {
        parcel_id: String,
        #[source]
        source: AnalyticsError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    GeoTiff(#[from] GeoTiffError),
    #[error(transparent)]
    Shapefile(#[from] ShapefileError),
    #[error(transparent)]
    Zip(#[from] zip::result::ZipError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_path_buf(), source }
}

/// Everything a bundle is built from besides the request.
#[derive(Debug, Clone, Copy)]
pub struct BundleContext<'a> {
    pub catalog: &'a SceneCatalog,
    pub parcels: &'a [FieldParcel],
    pub columns: &'a ShapefileColumns,
    pub color_ranges: &'a ColorRanges,
    pub erosion_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub request: RequestEcho,
    pub grid_crs: u32,
    pub color_ranges: ColorRanges,
    pub scenes: Vec<ManifestScene>,
    pub parcels: ManifestParcels,
    pub timeseries: Vec<ManifestSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestEcho {
    pub crop: String,
    pub year: i32,
    pub ratio_mode: RatioMode,
    pub aoi: serde_json::Value,
    pub season_start: NaiveDate,
    pub season_end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestScene {
    pub scene_id: String,
    pub acquired_at: DateTime<Utc>,
    pub pass: String,
    pub relative_orbit: u32,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParcels {
    pub file: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSeries {
    pub parcel_id: String,
    pub file: String,
    pub samples: usize,
    pub eroded_away: bool,
}

/// Flattened series for chart clients: one row per parcel and scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDocument {
    pub ratio_mode: RatioMode,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub parcel_id: String,
    #[serde(flatten)]
    pub sample: TimeSeriesSample,
}

#[derive(Debug)]
pub struct Bundle {
    pub zip: Vec<u8>,
    pub manifest: Manifest,
    pub series: SeriesDocument,
}

/// Inclusive UTC interval covering whole days `start..=end`.
pub fn day_interval(start: NaiveDate, end: NaiveDate) -> (DateTime<Utc>, DateTime<Utc>) {
    let s = start.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
    let e = (end + Duration::days(1)).and_hms_opt(0, 0, 0).expect("midnight").and_utc() - Duration::nanoseconds(1);
    (s, e)
}

/// Reduce an id to `[A-Za-z0-9._-]`, never starting with a dot.
fn file_stem(s: &str) -> String {
    let mut out: String =
        s.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect();
    if out.is_empty() || out.starts_with('.') {
        out.insert(0, '_');
    }
    out
}

fn unique(dir: &str, stem: String, ext: &str, taken: &mut BTreeSet<String>) -> String {
    let mut name = format!("{dir}/{stem}.{ext}");
    let mut n = 2;
    while !taken.insert(name.clone()) {
        name = format!("{dir}/{stem}_{n}.{ext}");
        n += 1;
    }
    name
}

fn scene_error(rec: &SceneRecord) -> impl FnOnce(CatalogError) -> BundleError + '_ {
    move |e| BundleError::Scene { scene_id: rec.scene_id.clone(), message: e.to_string() }
}

/// Build the bundle, using `work` (created and emptied here) as scratch
/// space.
pub fn build_bundle(req: &NewRequest, ctx: &BundleContext<'_>, work: &Path) -> Result<Bundle, BundleError> {
    if work.exists() {
        fs::remove_dir_all(work).map_err(io_err(work))?;
    }
    for sub in ["scenes", "parcels", "timeseries"] {
        let d = work.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }

    let crop = find_crop(&req.crop)?;
    let (season_start, season_end) = crop.window(req.year)?;
    let (t0, t1) = day_interval(season_start, season_end);
    let aoi = req.polygon.bbox();
    ctx.catalog.reload()?;
    let scenes = ctx.catalog.query_scenes(&aoi, t0, t1)?;
    let mut taken = BTreeSet::new();
    let mut layers = Vec::new();

    // Composites, clipped to the AOI rectangle.
    let mut manifest_scenes = Vec::new();
    for rec in &scenes {
        let l = ctx.catalog.scene_layers(rec, Some(&aoi)).map_err(scene_error(rec))?;
        let rgb = composite_rgb(&l.vv_db, &l.vh_db, req.ratio_mode)
            .map_err(|e| BundleError::Scene { scene_id: rec.scene_id.clone(), message: e.to_string() })?;
        let stem = format!("{}_{}_{}", rec.acquired_at.format("%Y%m%d"), rec.relative_orbit, rec.pass);
        let file = unique("scenes", stem, "tif", &mut taken);
        write_geotiff_bands(&rgb, work.join(&file))?;
        layers.push(ProjectLayer { path: file.clone(), name: file_stem_of(&file), role: LayerRole::Composite });
        manifest_scenes.push(ManifestScene {
            scene_id: rec.scene_id.clone(),
            acquired_at: rec.acquired_at,
            pass: rec.pass.to_string(),
            relative_orbit: rec.relative_orbit,
            file,
        });
    }

    // Parcels touching the AOI rectangle, uncut.
    let parcels = clip_parcels_bbox(ctx.parcels, &aoi);
    let shp = ShapefilePaths::from_base(work.join("parcels/parcels"));
    write_parcels_shapefile(&parcels, &shp, ctx.columns)?;
    for ext in ["shp", "shx", "dbf"] {
        taken.insert(format!("parcels/parcels.{ext}"));
    }
    layers.push(ProjectLayer { path: "parcels/parcels.shp".into(), name: "parcels".into(), role: LayerRole::Parcels });

    // Per-parcel series over the scenes above, read at the extent of all
    // selected parcels (which may reach beyond the AOI).
    let mut series: Vec<TimeSeries> = Vec::new();
    if !parcels.is_empty() {
        let extent = parcels.iter().fold(aoi, |b, p| union(&b, &p.geometry.bbox()));
        let stack: Vec<SceneLayers> = scenes
            .iter()
            .map(|rec| ctx.catalog.scene_layers(rec, Some(&extent)).map_err(scene_error(rec)))
            .collect::<Result<_, _>>()?;
        for p in &parcels {
            let ts = build_field_time_series(p, &stack, ctx.erosion_m, req.ratio_mode)
                .map_err(|source| BundleError::Parcel { parcel_id: p.parcel_id.clone(), source })?;
            series.push(ts);
        }
    }
    let mut manifest_series = Vec::new();
    for ts in &series {
        let file = unique("timeseries", file_stem(&ts.parcel_id), "csv", &mut taken);
        let mut buf = Vec::new();
        write_time_series_csv(&mut buf, &ts.parcel_id, &align_growth_stages(ts, &[]))
            .map_err(|source| BundleError::Parcel { parcel_id: ts.parcel_id.clone(), source })?;
        let path = work.join(&file);
        fs::write(&path, &buf).map_err(io_err(&path))?;
        layers.push(ProjectLayer { path: file.clone(), name: ts.parcel_id.clone(), role: LayerRole::Table });
        manifest_series.push(ManifestSeries {
            parcel_id: ts.parcel_id.clone(),
            file,
            samples: ts.samples.len(),
            eroded_away: ts.eroded_away,
        });
    }

    let grid_crs = ctx.catalog.config().grid.crs;
    let title = format!("{} {}", crop.english_name, req.year);
    let qgs = build_project_descriptor(&title, grid_crs, &layers, ctx.color_ranges, req.ratio_mode);
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        request: RequestEcho {
            crop: crop.english_name.into(),
            year: req.year,
            ratio_mode: req.ratio_mode,
            aoi: serde_json::from_str(&polygon_to_geojson(&req.polygon))?,
            season_start,
            season_end,
        },
        grid_crs,
        color_ranges: *ctx.color_ranges,
        scenes: manifest_scenes,
        parcels: ManifestParcels { file: "parcels/parcels.shp".into(), count: parcels.len() },
        timeseries: manifest_series,
    };

    let mut entries: Vec<(String, Vec<u8>)> = Vec::new();
    entries.push(("manifest.json".into(), serde_json::to_vec_pretty(&manifest)?));
    entries.push(("project.qgs".into(), qgs.into_bytes()));
    for name in &taken {
        let p = work.join(name);
        entries.push((name.clone(), fs::read(&p).map_err(io_err(&p))?));
    }
    let zip = write_zip(entries)?;

    let points = series
        .iter()
        .flat_map(|ts| ts.samples.iter().map(|s| SeriesPoint { parcel_id: ts.parcel_id.clone(), sample: s.clone() }))
        .collect();
    Ok(Bundle { zip, manifest, series: SeriesDocument { ratio_mode: req.ratio_mode, points } })
}

fn file_stem_of(path: &str) -> String {
    Path::new(path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn union(a: &BBox, b: &BBox) -> BBox {
    BBox::new(a.min_x.min(b.min_x), a.min_y.min(b.min_y), a.max_x.max(b.max_x), a.max_y.max(b.max_y))
}

/// Deflated archive with entries sorted by name and the DOS epoch as every
/// timestamp.
pub fn write_zip(mut entries: Vec<(String, Vec<u8>)>) -> Result<Vec<u8>, BundleError> {
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let opts = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    let mut zw = zip::ZipWriter::new(Cursor::new(Vec::new()));
    for (name, bytes) in &entries {
        zw.start_file(name.as_str(), opts)?;
        zw.write_all(bytes).map_err(io_err(Path::new(name)))?;
    }
    Ok(zw.finish()?.into_inner())
}

/// Entry names of a zip archive, in archive order.
pub fn zip_entries(bytes: &[u8]) -> Result<Vec<String>, BundleError> {
    let z = zip::ZipArchive::new(Cursor::new(bytes))?;
    Ok((0..z.len()).filter_map(|i| z.name_for_index(i).map(String::from)).collect())
}

/// Read one entry of a zip archive.
pub fn zip_entry(bytes: &[u8], name: &str) -> Result<Vec<u8>, BundleError> {
    let mut z = zip::ZipArchive::new(Cursor::new(bytes))?;
    let mut f = z.by_name(name)?;
    let mut out = Vec::new();
    std::io::copy(&mut f, &mut out).map_err(io_err(Path::new(name)))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zip_is_sorted_and_stable() {
        let a = write_zip(vec![("b.txt".into(), b"2".to_vec()), ("a/x.txt".into(), b"1".to_vec())]).unwrap();
        let b = write_zip(vec![("a/x.txt".into(), b"1".to_vec()), ("b.txt".into(), b"2".to_vec())]).unwrap();
        assert_eq!(a, b);
        assert_eq!(zip_entries(&a).unwrap(), ["a/x.txt", "b.txt"]);
        assert_eq!(zip_entry(&a, "b.txt").unwrap(), b"2");
    }

    #[test]
    fn names() {
        assert_eq!(file_stem("DK/12-3 a"), "DK_12-3_a");
        assert_eq!(file_stem(".."), "_..");
        let mut taken = BTreeSet::new();
        assert_eq!(unique("t", "a".into(), "csv", &mut taken), "t/a.csv");
        assert_eq!(unique("t", "a".into(), "csv", &mut taken), "t/a_2.csv");
    }

    #[test]
    fn day_interval_is_inclusive() {
        let d = |m, day| NaiveDate::from_ymd_opt(2017, m, day).unwrap();
        let (s, e) = day_interval(d(4, 1), d(4, 2));
        assert_eq!(s.to_rfc3339(), "2017-04-01T00:00:00+00:00");
        assert!(e < d(4, 3).and_hms_opt(0, 0, 0).unwrap().and_utc());
        assert!(e > d(4, 2).and_hms_opt(23, 59, 59).unwrap().and_utc());
    }
}
