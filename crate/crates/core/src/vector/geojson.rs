//! RFC 7946 polygon subset.

use serde_json::{json, Value};
use thiserror::Error;

use super::polygon::{Coord, Polygon, PolygonError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoJsonError {
    #[error("malformed GeoJSON: {0}")]
    Malformed(String),
    #[error("expected a single polygon, found {0} geometries")]
    NotSinglePolygon(usize),
    #[error("unsupported geometry type {0:?}; a Polygon is required")]
    UnsupportedGeometryType(String),
    #[error("ring {0} is not closed")]
    UnclosedRing(usize),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(PolygonError),
}

/// Parse a document holding exactly one polygon: a bare Polygon geometry, a
/// Feature, or a FeatureCollection / GeometryCollection with one member.
pub fn parse_geojson_polygon(text: &str) -> Result<Polygon, GeoJsonError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| GeoJsonError::Malformed(e.to_string()))?;
    let polygon = single_polygon(&doc)?;
    polygon.validate().map_err(|e| match e {
        PolygonError::UnclosedRing { ring } => GeoJsonError::UnclosedRing(ring),
        other => GeoJsonError::InvalidPolygon(other),
    })?;
    Ok(polygon)
}

fn type_of(v: &Value) -> Result<&str, GeoJsonError> {
    v.get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| GeoJsonError::Malformed("object without a \"type\" member".into()))
}

fn single_polygon(v: &Value) -> Result<Polygon, GeoJsonError> {
    match type_of(v)? {
        "Polygon" => polygon_from_coords(member(v, "coordinates")?),
        "MultiPolygon" => {
            let polys = array(member(v, "coordinates")?, "MultiPolygon coordinates")?;
            match polys.as_slice() {
                [one] => polygon_from_coords(one),
                many => Err(GeoJsonError::NotSinglePolygon(many.len())),
            }
        }
        "Feature" => {
            let g = member(v, "geometry")?;
            if g.is_null() {
                return Err(GeoJsonError::NotSinglePolygon(0));
            }
            single_polygon(g)
        }
        "FeatureCollection" => match array(member(v, "features")?, "features")?.as_slice() {
            [one] => single_polygon(one),
            many => Err(GeoJsonError::NotSinglePolygon(many.len())),
        },
        "GeometryCollection" => match array(member(v, "geometries")?, "geometries")?.as_slice() {
            [one] => single_polygon(one),
            many => Err(GeoJsonError::NotSinglePolygon(many.len())),
        },
        other => Err(GeoJsonError::UnsupportedGeometryType(other.to_string())),
    }
}

fn member<'a>(v: &'a Value, key: &str) -> Result<&'a Value, GeoJsonError> {
    v.get(key).ok_or_else(|| GeoJsonError::Malformed(format!("missing \"{key}\"")))
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>, GeoJsonError> {
    v.as_array().ok_or_else(|| GeoJsonError::Malformed(format!("{what} is not an array")))
}

fn polygon_from_coords(v: &Value) -> Result<Polygon, GeoJsonError> {
    let rings = array(v, "Polygon coordinates")?;
    if rings.is_empty() {
        return Err(GeoJsonError::Malformed("polygon without rings".into()));
    }
    let mut parsed: Vec<Vec<Coord>> = Vec::with_capacity(rings.len());
    for ring in rings {
        let positions = array(ring, "ring")?;
        let mut coords = Vec::with_capacity(positions.len());
        for pos in positions {
            let p = array(pos, "position")?;
            let (Some(x), Some(y)) = (p.first().and_then(Value::as_f64), p.get(1).and_then(Value::as_f64)) else {
                return Err(GeoJsonError::Malformed("position needs two numbers".into()));
            };
            coords.push((x, y));
        }
        parsed.push(coords);
    }
    let exterior = parsed.remove(0);
    Ok(Polygon { exterior, holes: parsed })
}

/// Serialise as a bare Polygon geometry.
pub fn polygon_to_geojson(polygon: &Polygon) -> String {
    let ring = |r: &Vec<Coord>| r.iter().map(|&(x, y)| json!([x, y])).collect::<Vec<_>>();
    let coords: Vec<_> = polygon.rings().map(ring).collect();
    json!({ "type": "Polygon", "coordinates": coords }).to_string()
}
