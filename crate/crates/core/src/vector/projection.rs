//! WGS84 longitude/latitude ↔ UTM grid coordinates (Krüger series, third
//! order in the third flattening; sub-millimetre inside a zone).
//!
//! Only vector geometry and bounding boxes are converted; rasters are never
//! reprojected.

use thiserror::Error;

use super::polygon::{Coord, Polygon};
use crate::raster::BBox;

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const GRS80_F: f64 = 1.0 / 298.257_222_101;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

/// Vertices inserted per bounding-box edge when projecting a rectangle.
const DENSIFY: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("EPSG:{0} is not supported (use 4326, 4258, 326xx, 327xx or 258xx)")]
pub struct UnsupportedCrs(pub u32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crs {
    /// Longitude/latitude degrees.
    Geographic { epsg: u32 },
    /// Universal Transverse Mercator metres.
    Utm { epsg: u32, zone: u8, south: bool, flattening: f64 },
}

impl Crs {
    pub fn from_epsg(epsg: u32) -> Result<Crs, UnsupportedCrs> {
        match epsg {
            4326 | 4258 => Ok(Crs::Geographic { epsg }),
            32601..=32660 => Ok(Crs::Utm { epsg, zone: (epsg - 32600) as u8, south: false, flattening: WGS84_F }),
            32701..=32760 => Ok(Crs::Utm { epsg, zone: (epsg - 32700) as u8, south: true, flattening: WGS84_F }),
            // ETRS89 / UTM zones 28N–38N.
            25828..=25838 => Ok(Crs::Utm { epsg, zone: (epsg - 25800) as u8, south: false, flattening: GRS80_F }),
            other => Err(UnsupportedCrs(other)),
        }
    }

    pub fn epsg(&self) -> u32 {
        match *self {
            Crs::Geographic { epsg } | Crs::Utm { epsg, .. } => epsg,
        }
    }

    pub fn is_geographic(&self) -> bool {
        matches!(self, Crs::Geographic { .. })
    }

    /// Longitude/latitude → map coordinates.
    pub fn from_lonlat(&self, (lon, lat): Coord) -> Coord {
        match *self {
            Crs::Geographic { .. } => (lon, lat),
            Crs::Utm { zone, south, flattening, .. } => utm_forward(lon, lat, zone, south, flattening),
        }
    }

    /// Map coordinates → longitude/latitude.
    pub fn to_lonlat(&self, (x, y): Coord) -> Coord {
        match *self {
            Crs::Geographic { .. } => (x, y),
            Crs::Utm { zone, south, flattening, .. } => utm_inverse(x, y, zone, south, flattening),
        }
    }

    pub fn polygon_from_lonlat(&self, p: &Polygon) -> Polygon {
        p.map_coords(|c| self.from_lonlat(c))
    }

    /// Bounding box in map coordinates of a lon/lat rectangle, using
    /// densified edges so curved images of the edges are covered.
    pub fn bbox_from_lonlat(&self, b: &BBox) -> BBox {
        if self.is_geographic() {
            return *b;
        }
        BBox::from_points(densified(b).map(|c| self.from_lonlat(c))).expect("non-empty")
    }

    /// Lon/lat bounding box of a map-coordinate rectangle.
    pub fn bbox_to_lonlat(&self, b: &BBox) -> BBox {
        if self.is_geographic() {
            return *b;
        }
        BBox::from_points(densified(b).map(|c| self.to_lonlat(c))).expect("non-empty")
    }
}

fn densified(b: &BBox) -> impl Iterator<Item = Coord> + '_ {
    (0..=DENSIFY).flat_map(move |i| {
        let t = i as f64 / DENSIFY as f64;
        let x = b.min_x + t * b.width();
        let y = b.min_y + t * b.height();
        [(x, b.min_y), (x, b.max_y), (b.min_x, y), (b.max_x, y)]
    })
}

struct Series {
    a_hat: f64,
    alpha: [f64; 3],
    beta: [f64; 3],
    delta: [f64; 3],
    n: f64,
}

fn series(flattening: f64) -> Series {
    let n = flattening / (2.0 - flattening);
    let (n2, n3) = (n * n, n * n * n);
    Series {
        a_hat: WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n2 * n2 / 64.0),
        alpha: [n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0, 13.0 * n2 / 48.0 - 3.0 * n3 / 5.0, 61.0 * n3 / 240.0],
        beta: [n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0, n2 / 48.0 + n3 / 15.0, 17.0 * n3 / 480.0],
        delta: [2.0 * n - 2.0 * n2 / 3.0 - 2.0 * n3, 7.0 * n2 / 3.0 - 8.0 * n3 / 5.0, 56.0 * n3 / 15.0],
        n,
    }
}

fn central_meridian(zone: u8) -> f64 {
    (zone as f64 * 6.0 - 183.0).to_radians()
}

fn utm_forward(lon: f64, lat: f64, zone: u8, south: bool, flattening: f64) -> Coord {
    let s = series(flattening);
    let phi = lat.to_radians();
    let dl = lon.to_radians() - central_meridian(zone);
    let c = 2.0 * s.n.sqrt() / (1.0 + s.n);
    let t = (phi.sin().atanh() - c * (c * phi.sin()).atanh()).sinh();
    let xi_p = (t / dl.cos()).atan();
    let eta_p = (dl.sin() / (1.0 + t * t).sqrt()).atanh();
    let mut e = eta_p;
    let mut n = xi_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        e += a * (k * xi_p).cos() * (k * eta_p).sinh();
        n += a * (k * xi_p).sin() * (k * eta_p).cosh();
    }
    let n0 = if south { FALSE_NORTHING_SOUTH } else { 0.0 };
    (FALSE_EASTING + K0 * s.a_hat * e, n0 + K0 * s.a_hat * n)
}

fn utm_inverse(x: f64, y: f64, zone: u8, south: bool, flattening: f64) -> Coord {
    let s = series(flattening);
    let n0 = if south { FALSE_NORTHING_SOUTH } else { 0.0 };
    let xi = (y - n0) / (K0 * s.a_hat);
    let eta = (x - FALSE_EASTING) / (K0 * s.a_hat);
    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let chi = (xi_p.sin() / eta_p.cosh()).asin();
    let mut phi = chi;
    for (j, d) in s.delta.iter().enumerate() {
        phi += d * (2.0 * (j + 1) as f64 * chi).sin();
    }
    let lon = central_meridian(zone) + (eta_p.sinh() / xi_p.cos()).atan();
    (lon.to_degrees(), phi.to_degrees())
}
