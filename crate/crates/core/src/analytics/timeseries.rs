use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{zonal_mean, AnalyticsError, RatioMode};
use crate::raster::{erode_disk, rasterize_polygon, GridGeometry, Mask, Raster, RasterError};
use crate::vector::projection::Crs;
use crate::vector::FieldParcel;

/// Inward boundary erosion applied to parcels before averaging, metres.
pub const DEFAULT_EROSION_M: f64 = 30.0;

/// The two dB layers of one acquisition on a shared grid.
#[derive(Debug, Clone)]
pub struct SceneLayers {
    pub scene_id: String,
    pub acquired_at: DateTime<Utc>,
    pub vv_db: Raster,
    pub vh_db: Raster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSample {
    pub timestamp: DateTime<Utc>,
    pub scene_id: String,
    pub mean_vv_db: f64,
    pub mean_vh_db: f64,
    /// `None` where the ratio is undefined for the chosen mode.
    pub ratio: Option<f64>,
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub parcel_id: String,
    pub mode: RatioMode,
    pub samples: Vec<TimeSeriesSample>,
    /// Set when erosion removed every pixel of the parcel on some scene grid.
    pub eroded_away: bool,
}

fn parcel_mask(parcel: &FieldParcel, grid: &GridGeometry, erosion_m: f64) -> Result<Mask, AnalyticsError> {
    let crs = Crs::from_epsg(grid.crs)?;
    if erosion_m > 0.0 && crs.is_geographic() {
        return Err(AnalyticsError::GeographicErosion(grid.crs));
    }
    let polygon = crs.polygon_from_lonlat(&parcel.geometry);
    let mask = match rasterize_polygon(&polygon, grid) {
        Ok(m) => m,
        // Slivers that collapse after projection simply cover nothing.
        Err(RasterError::DegeneratePolygon(_)) => Mask::empty(*grid),
        Err(e) => return Err(e.into()),
    };
    if erosion_m > 0.0 {
        Ok(erode_disk(&mask, erosion_m)?)
    } else {
        Ok(mask)
    }
}

/// Per-scene zonal means of VV and VH over the eroded parcel.
///
/// The parcel geometry is lon/lat and is projected onto each scene grid.
/// The ratio is taken between the two field means, not averaged per pixel.
/// Scenes where no valid pixel survives contribute no sample.
pub fn build_field_time_series(
    parcel: &FieldParcel,
    scenes: &[SceneLayers],
    erosion_m: f64,
    mode: RatioMode,
) -> Result<TimeSeries, AnalyticsError> {
    if !(erosion_m >= 0.0 && erosion_m.is_finite()) {
        return Err(RasterError::InvalidRadius(erosion_m).into());
    }
    let mut samples = Vec::new();
    let mut eroded_away = false;
    let mut cache: Option<(GridGeometry, Mask)> = None;
    for scene in scenes {
        if scene.vv_db.geometry() != scene.vh_db.geometry() {
            return Err(AnalyticsError::GeometryMismatch);
        }
        let grid = *scene.vv_db.geometry();
        let mask = match &cache {
            Some((g, m)) if *g == grid => m,
            _ => &cache.insert((grid, parcel_mask(parcel, &grid, erosion_m)?)).1,
        };
        if mask.count() == 0 {
            eroded_away = true;
            continue;
        }
        let vv = zonal_mean(&scene.vv_db, mask)?;
        let vh = zonal_mean(&scene.vh_db, mask)?;
        // Both layers share the nodata footprint after ingest; require both.
        let (Some(mvv), Some(mvh)) = (vv.mean, vh.mean) else { continue };
        samples.push(TimeSeriesSample {
            timestamp: scene.acquired_at,
            scene_id: scene.scene_id.clone(),
            mean_vv_db: mvv,
            mean_vh_db: mvh,
            ratio: mode.apply(mvv, mvh),
            pixel_count: vv.count.min(vh.count),
        });
    }
    samples.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.scene_id.cmp(&b.scene_id)));
    Ok(TimeSeries { parcel_id: parcel.parcel_id.clone(), mode, samples, eroded_away })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DEFAULT_NODATA;
    use crate::vector::Polygon;
    use chrono::TimeZone;

    fn grid() -> GridGeometry {
        GridGeometry::new(20, 20, 500_000.0, 6_200_200.0, 10.0, 10.0, 32632).unwrap()
    }

    /// Parcel whose projected footprint is the map rectangle `[x0,x1]×[y0,y1]`.
    fn parcel(x0: f64, y0: f64, x1: f64, y1: f64) -> FieldParcel {
        let crs = Crs::from_epsg(32632).unwrap();
        let ring: Vec<_> = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
            .into_iter()
            .map(|p| crs.to_lonlat(p))
            .collect();
        FieldParcel::new("p1", "Vinterhvede", Polygon::new(ring, vec![]).unwrap()).unwrap()
    }

    fn scene(id: &str, day: u32, vv: f32, vh: f32) -> SceneLayers {
        SceneLayers {
            scene_id: id.into(),
            acquired_at: Utc.with_ymd_and_hms(2017, 5, day, 5, 30, 0).unwrap(),
            vv_db: Raster::filled(grid(), vv).unwrap(),
            vh_db: Raster::filled(grid(), vh).unwrap(),
        }
    }

    #[test]
    fn single_pixel_parcel() {
        // Slightly inset square around the centre of pixel (5, 5).
        let p = parcel(500_051.0, 6_200_141.0, 500_059.0, 6_200_149.0);
        let mut s = scene("a", 1, -12.0, -18.0);
        s.vv_db = Raster::from_fn(grid(), DEFAULT_NODATA, |c, r| if (c, r) == (5, 5) { -12.0 } else { 0.0 }).unwrap();
        let ts = build_field_time_series(&p, &[s], 0.0, RatioMode::DbQuotient).unwrap();
        assert_eq!(ts.samples.len(), 1);
        let smp = &ts.samples[0];
        assert_eq!((smp.mean_vv_db, smp.mean_vh_db, smp.pixel_count), (-12.0, -18.0, 1));
        assert!((smp.ratio.unwrap() - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn narrow_parcel_erodes_away() {
        let p = parcel(500_020.0, 6_200_020.0, 500_070.0, 6_200_180.0);
        let ts = build_field_time_series(&p, &[scene("a", 1, -10.0, -20.0)], 30.0, RatioMode::DbQuotient).unwrap();
        assert!(ts.samples.is_empty());
        assert!(ts.eroded_away);
    }

    #[test]
    fn constants_in_date_order() {
        let p = parcel(500_000.0, 6_200_000.0, 500_200.0, 6_200_200.0);
        let scenes = [scene("c", 20, -9.0, -15.0), scene("a", 2, -11.0, -17.0), scene("b", 11, -10.0, -16.0)];
        let ts = build_field_time_series(&p, &scenes, 30.0, RatioMode::DbDifference).unwrap();
        let got: Vec<_> = ts.samples.iter().map(|s| (s.scene_id.as_str(), s.mean_vv_db, s.ratio)).collect();
        assert_eq!(got, vec![("a", -11.0, Some(6.0)), ("b", -10.0, Some(6.0)), ("c", -9.0, Some(6.0))]);
        assert!(!ts.eroded_away);
    }

    #[test]
    fn geographic_grid_refuses_metric_erosion() {
        let g = GridGeometry::new(4, 4, 9.0, 56.0, 0.001, 0.001, 4326).unwrap();
        let p = FieldParcel::new("p", "x", Polygon::rectangle(&crate::raster::BBox::new(9.0, 55.997, 9.003, 56.0))).unwrap();
        let s = SceneLayers {
            scene_id: "s".into(),
            acquired_at: Utc::now(),
            vv_db: Raster::filled(g, -10.0).unwrap(),
            vh_db: Raster::filled(g, -20.0).unwrap(),
        };
        assert!(matches!(
            build_field_time_series(&p, std::slice::from_ref(&s), 30.0, RatioMode::DbQuotient),
            Err(AnalyticsError::GeographicErosion(4326))
        ));
        assert_eq!(build_field_time_series(&p, &[s], 0.0, RatioMode::DbQuotient).unwrap().samples.len(), 1);
    }
}
