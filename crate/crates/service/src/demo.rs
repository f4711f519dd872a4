//! Self-contained demo environment: a small synthetic catalog, an LPIS
//! layer and a matching configuration file.
//!
//! Four dual-pol scenes sit near 9.5°E 56.0°N on a UTM 32N grid; three fall
//! inside the 2017 winter-wheat season and one after it. Parcels are small
//! squares, one of them outside the suggested AOI.

use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use fieldbabel_core::catalog::{AnalysisGrid, CatalogError, IngestRequest, Pass, SceneCatalog};
use fieldbabel_core::raster::{BBox, GeoTiffError, GridGeometry};
use fieldbabel_core::synthetic::SyntheticScene;
use fieldbabel_core::vector::projection::Crs;
use fieldbabel_core::vector::{
    polygon_to_geojson, write_parcels_shapefile, FieldParcel, Polygon, ShapefileColumns, ShapefileError,
    ShapefilePaths,
};
use thiserror::Error;

use crate::config::{LpisSection, ServiceConfig};

pub const DEMO_EPSG: u32 = 32632;
pub const DEMO_CENTER: (f64, f64) = (9.5, 56.0);

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    GeoTiff(#[from] GeoTiffError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Shapefile(#[from] ShapefileError),
    #[error("cannot encode configuration: {0}")]
    Toml(#[from] toml::ser::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DemoError + '_ {
    move |source| DemoError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct DemoSetup {
    pub root: PathBuf,
    pub config_path: PathBuf,
    pub config: ServiceConfig,
    /// 0.2° × 0.2° AOI around the scenes, as GeoJSON text.
    pub aoi_geojson: String,
    pub scene_ids: Vec<String>,
    /// Ids of the scenes inside the 2017 winter-wheat window.
    pub in_season: Vec<String>,
    pub parcels: Vec<FieldParcel>,
}

/// Scene id, date (y, m, d), mean VV and VH dB.
const SCENES: [(&str, (i32, u32, u32), f64, f64); 4] = [
    ("S1A_DEMO_20170301", (2017, 3, 1), -13.0, -20.0),
    ("S1A_DEMO_20170501", (2017, 5, 1), -11.0, -17.0),
    ("S1A_DEMO_20170701", (2017, 7, 1), -12.0, -19.0),
    ("S1A_DEMO_20171115", (2017, 11, 15), -14.0, -21.0),
];

/// Side of each synthetic scene in pixels (10 m).
pub const DEMO_SCENE_PX: usize = 120;

pub fn demo_aoi() -> Polygon {
    let (lon, lat) = DEMO_CENTER;
    Polygon::rectangle(&BBox::new(lon - 0.1, lat - 0.1, lon + 0.1, lat + 0.1))
}

fn demo_parcels(crs: &Crs, origin: (f64, f64)) -> Vec<FieldParcel> {
    // 150 m squares placed in map units, stored in lon/lat.
    let square = |x: f64, y: f64, s: f64| {
        let ring: Vec<(f64, f64)> =
            [(x, y), (x + s, y), (x + s, y + s), (x, y + s), (x, y)].iter().map(|&p| crs.to_lonlat(p)).collect();
        Polygon::new(ring, vec![]).expect("valid square")
    };
    let (x0, y0) = (origin.0, origin.1 - DEMO_SCENE_PX as f64 * 10.0);
    let mut out: Vec<FieldParcel> = [(200.0, 200.0), (600.0, 300.0), (350.0, 800.0)]
        .iter()
        .enumerate()
        .map(|(i, &(dx, dy))| {
            let mut p = FieldParcel::new(format!("DK-{:03}", i + 1), "Vinterhvede", square(x0 + dx, y0 + dy, 150.0))
                .expect("valid parcel");
            p.applicant_id = Some(format!("A{}", 100 + i));
            p
        })
        .collect();
    // Well outside the AOI.
    let (fx, fy) = crs.from_lonlat((DEMO_CENTER.0 + 0.5, DEMO_CENTER.1 + 0.3));
    out.push(FieldParcel::new("DK-FAR", "Vårbyg", square(fx, fy, 150.0)).expect("valid parcel"));
    out
}

/// Build the demo under `root` (which should be empty or absent).
pub fn write_demo(root: &Path) -> Result<DemoSetup, DemoError> {
    write_demo_sized(root, DEMO_SCENE_PX)
}

/// As [`write_demo`] with `scene_px`-wide scenes (at least
/// [`DEMO_SCENE_PX`]); larger scenes make every job slower.
pub fn write_demo_sized(root: &Path, scene_px: usize) -> Result<DemoSetup, DemoError> {
    let scene_px = scene_px.max(DEMO_SCENE_PX);
    let raw = root.join("raw");
    let lpis_dir = root.join("lpis");
    for d in [root, &raw, &lpis_dir] {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let crs = Crs::from_epsg(DEMO_EPSG).expect("supported CRS");
    let (cx, cy) = crs.from_lonlat(DEMO_CENTER);
    // Upper-left corner, deliberately off the 10 m lattice.
    let origin = ((cx / 10.0).round() * 10.0 + 3.0, (cy / 10.0).round() * 10.0 - 4.0);
    let grid = GridGeometry::new(scene_px, scene_px, origin.0, origin.1, 10.0, 10.0, DEMO_EPSG)
        .expect("valid grid");

    let mut config = ServiceConfig::new(root.join("data"), root.join("catalog"), AnalysisGrid::new(DEMO_EPSG));
    let catalog = SceneCatalog::open_or_create(&config.catalog.root, config.catalog_config().expect("valid"))?;
    let mut scene_ids = Vec::new();
    let mut in_season = Vec::new();
    for (i, &(id, (y, m, d), vv, vh)) in SCENES.iter().enumerate() {
        let scene = SyntheticScene {
            scene_id: id.into(),
            acquired_at: Utc.with_ymd_and_hms(y, m, d, 5, 41, 0).single().expect("valid date"),
            pass: Pass::Descending,
            relative_orbit: 66,
            grid,
            vv_db: vv,
            vh_db: vh,
            gain: 400.0,
            speckle: Some((1, 1000 + i as u64)),
        };
        if catalog.get(id).is_none() {
            let files = scene.write(&raw)?;
            catalog.ingest_scene(IngestRequest { vv: Some(&files.vv), vh: Some(&files.vh), sidecar: &files.sidecar })?;
        }
        scene_ids.push(id.to_string());
        if (y, m) <= (2017, 10) {
            in_season.push(id.to_string());
        }
    }

    let parcels = demo_parcels(&crs, (origin.0, origin.1 - (scene_px - DEMO_SCENE_PX) as f64 * 10.0));
    let columns = ShapefileColumns::default();
    let shp = ShapefilePaths::from_base(lpis_dir.join("parcels"));
    write_parcels_shapefile(&parcels, &shp, &columns)?;
    config.lpis = Some(LpisSection { path: shp.shp.clone(), columns });

    // Paths in the file are relative to it, so the demo can be moved.
    let mut on_disk = config.clone();
    on_disk.data_dir = "data".into();
    on_disk.catalog.root = "catalog".into();
    if let Some(l) = &mut on_disk.lpis {
        l.path = "lpis/parcels.shp".into();
    }
    let config_path = root.join("fieldbabel.toml");
    std::fs::write(&config_path, toml::to_string_pretty(&on_disk)?).map_err(io_err(&config_path))?;
    Ok(DemoSetup {
        root: root.to_path_buf(),
        config_path,
        config,
        aoi_geojson: polygon_to_geojson(&demo_aoi()),
        scene_ids,
        in_season,
        parcels,
    })
}
