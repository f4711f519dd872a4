use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::BBox;

/// `(x, y)`; for WGS84 geometry that is `(lon, lat)`.
pub type Coord = (f64, f64);

/// Largest accepted AOI bounding-box span, in degrees, per axis.
pub const MAX_AOI_SPAN_DEG: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolygonError {
    #[error("ring {ring} is not closed")]
    UnclosedRing { ring: usize },
    #[error("ring {ring} has {count} vertices; at least 4 are required")]
    TooFewVertices { ring: usize, count: usize },
    #[error("ring {ring} repeats vertex {index}")]
    RepeatedVertex { ring: usize, index: usize },
    #[error("ring {ring} has fewer than 3 distinct vertices")]
    Degenerate { ring: usize },
    #[error("ring {ring} has a non-finite coordinate")]
    NonFinite { ring: usize },
    #[error("hole {hole} is not inside the exterior ring")]
    HoleOutside { hole: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("AOI spans {lon_span:.4}° longitude × {lat_span:.4}° latitude; the limit is {max}° per axis")]
pub struct AoiError {
    pub lon_span: f64,
    pub lat_span: f64,
    pub max: f64,
}

/// Polygon with one exterior ring and optional holes. Rings are closed
/// (first vertex repeated last).
///
/// Winding follows GeoJSON (exterior counter-clockwise, holes clockwise)
/// when geometry comes from this crate's readers; it is not enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<Coord>,
    pub holes: Vec<Vec<Coord>>,
}

impl Polygon {
    pub fn new(exterior: Vec<Coord>, holes: Vec<Vec<Coord>>) -> Result<Self, PolygonError> {
        let p = Self { exterior, holes };
        p.validate()?;
        Ok(p)
    }

    /// Axis-aligned rectangle, counter-clockwise.
    pub fn rectangle(bbox: &BBox) -> Self {
        Self {
            exterior: vec![
                (bbox.min_x, bbox.min_y),
                (bbox.max_x, bbox.min_y),
                (bbox.max_x, bbox.max_y),
                (bbox.min_x, bbox.max_y),
                (bbox.min_x, bbox.min_y),
            ],
            holes: vec![],
        }
    }

    pub fn validate(&self) -> Result<(), PolygonError> {
        for (i, ring) in self.rings().enumerate() {
            validate_ring(ring, i)?;
        }
        for (h, hole) in self.holes.iter().enumerate() {
            if !hole.iter().all(|&p| ring_contains(&self.exterior, p) || on_ring(&self.exterior, p)) {
                return Err(PolygonError::HoleOutside { hole: h });
            }
        }
        Ok(())
    }

    /// Exterior followed by holes.
    pub fn rings(&self) -> impl Iterator<Item = &Vec<Coord>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_points(self.exterior.iter().copied()).unwrap_or(BBox::new(0.0, 0.0, 0.0, 0.0))
    }

    /// Even-odd containment over all rings.
    pub fn contains(&self, p: Coord) -> bool {
        self.rings().filter(|r| ring_contains(r, p)).count() % 2 == 1
    }

    /// Apply a coordinate transform to every vertex.
    pub fn map_coords<F: FnMut(Coord) -> Coord>(&self, mut f: F) -> Polygon {
        Polygon {
            exterior: self.exterior.iter().map(|&c| f(c)).collect(),
            holes: self.holes.iter().map(|r| r.iter().map(|&c| f(c)).collect()).collect(),
        }
    }

    /// Same polygon with every ring's vertex order reversed.
    pub fn reversed(&self) -> Polygon {
        let rev = |r: &Vec<Coord>| r.iter().rev().copied().collect::<Vec<_>>();
        Polygon { exterior: rev(&self.exterior), holes: self.holes.iter().map(rev).collect() }
    }
}

fn validate_ring(ring: &[Coord], i: usize) -> Result<(), PolygonError> {
    if ring.len() < 4 {
        return Err(PolygonError::TooFewVertices { ring: i, count: ring.len() });
    }
    if ring.iter().any(|c| !c.0.is_finite() || !c.1.is_finite()) {
        return Err(PolygonError::NonFinite { ring: i });
    }
    if ring.first() != ring.last() {
        return Err(PolygonError::UnclosedRing { ring: i });
    }
    if let Some(index) = ring.windows(2).position(|w| w[0] == w[1]) {
        return Err(PolygonError::RepeatedVertex { ring: i, index: index + 1 });
    }
    let mut distinct: Vec<Coord> = ring[..ring.len() - 1].to_vec();
    distinct.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(PolygonError::Degenerate { ring: i });
    }
    Ok(())
}

/// Crossing-number point-in-ring test.
pub(crate) fn ring_contains(ring: &[Coord], (x, y): Coord) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let ((xi, yi), (xj, yj)) = (w[0], w[1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

fn on_ring(ring: &[Coord], (x, y): Coord) -> bool {
    ring.windows(2).any(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
        cross == 0.0 && x >= x0.min(x1) && x <= x0.max(x1) && y >= y0.min(y1) && y <= y0.max(y1)
    })
}

/// Twice the signed area (shoelace); positive for counter-clockwise rings.
pub(crate) fn signed_area2(ring: &[Coord]) -> f64 {
    ring.windows(2).map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1).sum()
}

/// Accept an AOI iff its bounding box spans at most one degree in both
/// longitude and latitude (closed bound).
pub fn validate_aoi(polygon: &Polygon) -> Result<(), AoiError> {
    let b = polygon.bbox();
    let (lon_span, lat_span) = (b.width(), b.height());
    if lon_span <= MAX_AOI_SPAN_DEG && lat_span <= MAX_AOI_SPAN_DEG {
        Ok(())
    } else {
        Err(AoiError { lon_span, lat_span, max: MAX_AOI_SPAN_DEG })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, y0: f64, w: f64, h: f64) -> Polygon {
        Polygon::rectangle(&BBox::new(x0, y0, x0 + w, y0 + h))
    }

    #[test]
    fn aoi_limits() {
        assert!(validate_aoi(&rect(10.0, 55.0, 0.5, 0.5)).is_ok());
        let err = validate_aoi(&rect(10.0, 55.0, 1.2, 0.3)).unwrap_err();
        assert!((err.lon_span - 1.2).abs() < 1e-12);
        assert!((err.lat_span - 0.3).abs() < 1e-12);
        assert!(validate_aoi(&rect(10.0, 55.0, 1.0, 1.0)).is_ok());
        assert!(validate_aoi(&rect(10.0, 55.0, 0.3, 1.0000001)).is_err());
    }

    #[test]
    fn ring_errors() {
        let open = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        assert_eq!(Polygon::new(open, vec![]), Err(PolygonError::UnclosedRing { ring: 0 }));
        let short = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)];
        assert!(matches!(Polygon::new(short, vec![]), Err(PolygonError::TooFewVertices { .. })));
        let dup = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0)];
        assert!(matches!(Polygon::new(dup, vec![]), Err(PolygonError::RepeatedVertex { .. })));
        let flat = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0)];
        assert!(matches!(Polygon::new(flat, vec![]), Err(PolygonError::Degenerate { .. })));
    }

    #[test]
    fn hole_must_be_inside() {
        let outer = rect(0.0, 0.0, 10.0, 10.0).exterior;
        let inside = rect(2.0, 2.0, 2.0, 2.0).exterior;
        let outside = rect(20.0, 2.0, 2.0, 2.0).exterior;
        assert!(Polygon::new(outer.clone(), vec![inside]).is_ok());
        assert_eq!(
            Polygon::new(outer, vec![outside]),
            Err(PolygonError::HoleOutside { hole: 0 })
        );
    }

    #[test]
    fn containment_and_winding() {
        let p = Polygon::new(rect(0.0, 0.0, 10.0, 10.0).exterior, vec![rect(2.0, 2.0, 2.0, 2.0).exterior]).unwrap();
        assert!(p.contains((1.0, 1.0)));
        assert!(!p.contains((3.0, 3.0)));
        assert!(!p.contains((11.0, 3.0)));
        assert!(signed_area2(&p.exterior) > 0.0);
        assert!(signed_area2(&p.reversed().exterior) < 0.0);
    }
}
