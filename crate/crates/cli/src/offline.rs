//! Offline analytics straight off the catalog, without the job queue.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, ValueEnum};
use fieldbabel_core::analytics::{
    align_growth_stages, build_field_time_series, detect_peak, kmeans_cluster, read_growth_stages_csv,
    sampling_plan, write_time_series_csv, RatioMode,
};
use fieldbabel_core::calendar::find_crop;
use fieldbabel_core::catalog::{Polarization, SceneCatalog};
use fieldbabel_core::raster::{erode_disk, rasterize_polygon, write_geotiff, BBox, Raster};
use fieldbabel_core::vector::projection::Crs;
use fieldbabel_core::vector::{read_parcels_shapefile, FieldParcel};
use fieldbabel_service::bundle::day_interval;
use fieldbabel_service::{ColorRanges, ServiceConfig};

use crate::load_config;

#[derive(Debug, Args)]
pub struct TimeseriesArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Parcel shapefile; defaults to the configured LPIS layer.
    #[arg(long)]
    parcels: Option<PathBuf>,
    /// Restrict to these parcel ids (repeatable).
    #[arg(long = "parcel")]
    parcel_ids: Vec<String>,
    /// Limit scenes to a crop season; needs `--year`.
    #[arg(long, requires = "year")]
    crop: Option<String>,
    #[arg(long, requires = "crop")]
    year: Option<i32>,
    /// Growth-stage observations (`parcel_id,date,stage`).
    #[arg(long)]
    stages: Option<PathBuf>,
    #[arg(long, default_value = "db_quotient")]
    ratio_mode: RatioMode,
    /// Boundary erosion in metres; defaults to the configured value.
    #[arg(long)]
    erosion_m: Option<f64>,
    /// Directory for one CSV per parcel.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Band {
    Vv,
    Vh,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    scene: String,
    #[arg(long)]
    parcel: String,
    /// Parcel shapefile; defaults to the configured LPIS layer.
    #[arg(long)]
    parcels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "vv")]
    band: Band,
    #[arg(short, long, default_value_t = 3)]
    k: usize,
    /// Suggested sampling points per cluster.
    #[arg(long, default_value_t = 5)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    erosion_m: Option<f64>,
    /// Write the label raster here.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ColorRangeArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Lower percentile.
    #[arg(long, default_value_t = 2.0)]
    low: f64,
    /// Upper percentile.
    #[arg(long, default_value_t = 98.0)]
    high: f64,
}

fn load_parcels(cfg: &ServiceConfig, path: Option<&Path>) -> Result<Vec<FieldParcel>> {
    let (shp, columns) = match (path, &cfg.lpis) {
        (Some(p), l) => (p.to_path_buf(), l.as_ref().map(|l| l.columns.clone()).unwrap_or_default()),
        (None, Some(l)) => (l.path.clone(), l.columns.clone()),
        (None, None) => bail!("no parcel layer: pass --parcels or configure [lpis]"),
    };
    read_parcels_shapefile(&shp, shp.with_extension("dbf"), &columns)
        .with_context(|| format!("reading parcels from {}", shp.display()))
}

fn lonlat_bbox(parcels: &[FieldParcel]) -> Option<BBox> {
    BBox::from_points(parcels.iter().flat_map(|p| p.geometry.exterior.iter().copied()))
}

fn file_stem(id: &str) -> String {
    let s: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_".contains(c) { c } else { '_' }).collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

pub fn timeseries(args: TimeseriesArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let catalog = SceneCatalog::open(&cfg.catalog.root)?;
    let mut parcels = load_parcels(&cfg, args.parcels.as_deref())?;
    if !args.parcel_ids.is_empty() {
        parcels.retain(|p| args.parcel_ids.contains(&p.parcel_id));
    }
    let Some(bbox) = lonlat_bbox(&parcels) else { bail!("no parcels selected") };
    let (start, end) = match (&args.crop, args.year) {
        (Some(crop), Some(year)) => {
            let (s, e) = find_crop(crop)?.window(year)?;
            day_interval(s, e)
        }
        _ => (DateTime::<Utc>::MIN_UTC, DateTime::<Utc>::MAX_UTC),
    };
    let observations = match &args.stages {
        Some(p) => read_growth_stages_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
        None => Vec::new(),
    };
    let records = catalog.query_scenes(&bbox, start, end)?;
    log::info!("{} scenes, {} parcels", records.len(), parcels.len());
    let scenes = records
        .iter()
        .map(|r| catalog.scene_layers(r, Some(&bbox)).with_context(|| format!("scene {}", r.scene_id)))
        .collect::<Result<Vec<_>>>()?;
    let erosion = args.erosion_m.unwrap_or(cfg.erosion_m);
    std::fs::create_dir_all(&args.out)?;

    println!("parcel_id\tsamples\tpeak_time\tpeak_ratio\tpeak_stage");
    for parcel in &parcels {
        let ts = build_field_time_series(parcel, &scenes, erosion, args.ratio_mode)
            .with_context(|| format!("parcel {}", parcel.parcel_id))?;
        let aligned = align_growth_stages(&ts, &observations);
        let path = args.out.join(format!("{}.csv", file_stem(&parcel.parcel_id)));
        write_time_series_csv(BufWriter::new(File::create(&path)?), &parcel.parcel_id, &aligned)?;
        let peak = detect_peak(&ts);
        let stage = peak.as_ref().and_then(|p| aligned.iter().find(|a| a.sample.timestamp == p.timestamp)?.stage);
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{}\t{}\t{}\t{}\t{}{}",
            parcel.parcel_id,
            ts.samples.len(),
            peak.as_ref().map(|p| p.timestamp.to_rfc3339()).unwrap_or_else(|| "-".into()),
            fmt(peak.as_ref().map(|p| p.ratio)),
            fmt(stage),
            if ts.eroded_away { "\t(eroded away on some scenes)" } else { "" },
        );
    }
    Ok(())
}

pub fn cluster(args: ClusterArgs) -> Result<()> {
    if args.samples == 0 {
        bail!("--samples must be at least 1");
    }
    let cfg = load_config(&args.config)?;
    let catalog = SceneCatalog::open(&cfg.catalog.root)?;
    let parcel = load_parcels(&cfg, args.parcels.as_deref())?
        .into_iter()
        .find(|p| p.parcel_id == args.parcel)
        .with_context(|| format!("no parcel {}", args.parcel))?;
    let rec = catalog.get(&args.scene).with_context(|| format!("no scene {}", args.scene))?;
    let pol = match args.band {
        Band::Vv => Polarization::VV,
        Band::Vh => Polarization::VH,
    };
    let raster = catalog.get_raster(&rec, pol, Some(&parcel.geometry.bbox()))?;
    let grid = *raster.geometry();
    let crs = Crs::from_epsg(grid.crs)?;
    let mask = rasterize_polygon(&crs.polygon_from_lonlat(&parcel.geometry), &grid)?;
    let mask = erode_disk(&mask, args.erosion_m.unwrap_or(cfg.erosion_m))?;
    let clusters = kmeans_cluster(&raster, &mask, args.k, args.seed)?;
    log::info!(
        "{} {} pixels, centroids {:?} dB, SSE {:.3}",
        parcel.parcel_id,
        mask.count(),
        clusters.centroids,
        clusters.sse
    );
    if let Some(path) = &args.labels {
        write_geotiff(&clusters.labels, path)?;
    }
    println!("label,col,row,map_x,map_y,lon,lat,value_db");
    for p in sampling_plan(&clusters, &raster, args.samples) {
        let (lon, lat) = crs.to_lonlat((p.map_x, p.map_y));
        println!(
            "{},{},{},{},{},{:.7},{:.7},{}",
            p.label,
            p.col,
            p.row,
            p.map_x,
            p.map_y,
            lon,
            lat,
            raster.get(p.col, p.row)
        );
    }
    Ok(())
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn color_ranges(args: ColorRangeArgs) -> Result<()> {
    if !(0.0..args.high).contains(&args.low) || args.high > 100.0 {
        bail!("need 0 ≤ low < high ≤ 100");
    }
    let cfg = load_config(&args.config)?;
    let catalog = SceneCatalog::open(&cfg.catalog.root)?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for rec in catalog.entries().iter().filter(|r| r.is_ingested()) {
        let vv = catalog.get_raster(rec, Polarization::VV, None)?;
        let vh = catalog.get_raster(rec, Polarization::VH, None)?;
        push_pairs(&vv, &vh, &mut cols);
    }
    if cols[0].is_empty() {
        bail!("catalog holds no valid pixels");
    }
    let mut range = |i: usize| {
        let v = &mut cols[i];
        v.sort_by(f64::total_cmp);
        let round = |x: f64| (x * 100.0).round() / 100.0;
        [round(percentile(v, args.low)), round(percentile(v, args.high))]
    };
    let ranges = ColorRanges { vv: range(0), vh: range(1), db_quotient: range(2), db_difference: range(3) };
    let mut doc = toml::Table::new();
    doc.insert("color_ranges".into(), toml::Value::try_from(ranges)?);
    print!("{}", toml::to_string(&doc)?);
    Ok(())
}

fn push_pairs(vv: &Raster, vh: &Raster, cols: &mut [Vec<f64>; 4]) {
    for (&a, &b) in vv.values().iter().zip(vh.values()) {
        if vv.is_nodata(a) || vh.is_nodata(b) {
            continue;
        }
        let (a, b) = (a as f64, b as f64);
        cols[0].push(a);
        cols[1].push(b);
        if let Some(q) = RatioMode::DbQuotient.apply(a, b) {
            cols[2].push(q);
        }
        if let Some(d) = RatioMode::DbDifference.apply(a, b) {
            cols[3].push(d);
        }
    }
}
