//! Vector geometry: AOI polygons, LPIS field parcels, GeoJSON and ESRI
//! shapefile I/O, and the WGS84 ↔ UTM conversion used to bring lon/lat
//! geometry onto projected analysis grids.

mod geojson;
mod polygon;
pub mod projection;
mod shapefile;

pub use geojson::{parse_geojson_polygon, polygon_to_geojson, GeoJsonError};
pub use polygon::{validate_aoi, AoiError, Coord, Polygon, PolygonError, MAX_AOI_SPAN_DEG};
pub use shapefile::{
    read_parcels_shapefile, write_parcels_shapefile, ShapefileColumns, ShapefileError, ShapefilePaths,
};

use serde::{Deserialize, Serialize};

use crate::raster::BBox;

/// One LPIS field parcel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldParcel {
    pub parcel_id: String,
    /// Danish LPIS crop name, e.g. "Vinterhvede".
    pub crop_code: String,
    pub geometry: Polygon,
    pub applicant_id: Option<String>,
}

impl FieldParcel {
    pub fn new(
        parcel_id: impl Into<String>,
        crop_code: impl Into<String>,
        geometry: Polygon,
    ) -> Result<Self, PolygonError> {
        let parcel_id = parcel_id.into();
        if parcel_id.is_empty() {
            return Err(PolygonError::Invalid("empty parcel id".into()));
        }
        geometry.validate()?;
        Ok(Self { parcel_id, crop_code: crop_code.into(), geometry, applicant_id: None })
    }
}

/// Keep whole parcels whose bounding box intersects `bbox`. Geometry is not
/// cut.
pub fn clip_parcels_bbox(parcels: &[FieldParcel], bbox: &BBox) -> Vec<FieldParcel> {
    parcels
        .iter()
        .filter(|p| p.geometry.bbox().intersects(bbox))
        .cloned()
        .collect()
}
