//! Grid geometry, single-band rasters, masks and the operations on them.
//!
//! Georeferencing is restricted to north-up affine grids: the origin is the
//! outer top-left corner of pixel `(0, 0)`, columns advance east and rows
//! advance south. Pixel sizes are stored positive.

mod geotiff;
mod morphology;
mod rasterize;
mod resample;

pub use geotiff::{
    read_geotiff, read_geotiff_bands, write_geotiff, write_geotiff_bands, write_geotiff_u16,
    GeoTiffError,
};
pub use morphology::erode_disk;
pub use rasterize::rasterize_polygon;
pub use resample::resample_bilinear;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nodata sentinel used for every raster this crate writes.
pub const DEFAULT_NODATA: f32 = -9999.0;

/// Default pitch of analysis-ready layers, in metres.
pub const ANALYSIS_PIXEL_SIZE: f64 = 10.0;

/// Relative tolerance used when snapping map coordinates onto pixel edges.
const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
    #[error("value buffer has {actual} samples, grid needs {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite sample {value} at index {index} (use the nodata sentinel)")]
    NonFinite { index: usize, value: f32 },
    #[error("grid geometries differ")]
    GeometryMismatch,
    #[error("CRS mismatch: EPSG:{from} vs EPSG:{target}")]
    CrsMismatch { from: u32, target: u32 },
    #[error("bounding box does not intersect the raster extent")]
    EmptyIntersection,
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("anisotropic pixels ({x} x {y}); erosion needs square pixels")]
    AnisotropicPixels { x: f64, y: f64 },
    #[error("invalid erosion radius {0}")]
    InvalidRadius(f64),
}

/// Axis-aligned rectangle in map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x: min_x.min(max_x),
            min_y: min_y.min(max_y),
            max_x: min_x.max(max_x),
            max_y: min_y.max(max_y),
        }
    }

    pub fn from_points<I: IntoIterator<Item = (f64, f64)>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let (x, y) = it.next()?;
        let mut b = BBox { min_x: x, min_y: y, max_x: x, max_y: y };
        for (x, y) in it {
            b.min_x = b.min_x.min(x);
            b.min_y = b.min_y.min(y);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    /// Closed-set intersection test; touching edges count.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        if !self.intersects(other) {
            return None;
        }
        Some(BBox {
            min_x: self.min_x.max(other.min_x),
            min_y: self.min_y.max(other.min_y),
            max_x: self.max_x.min(other.max_x),
            max_y: self.max_y.min(other.max_y),
        })
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// North-up grid definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    /// Map x of the outer left edge of column 0.
    pub origin_x: f64,
    /// Map y of the outer top edge of row 0.
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
    /// EPSG code.
    pub crs: u32,
}

impl GridGeometry {
    pub fn new(
        width: usize,
        height: usize,
        origin_x: f64,
        origin_y: f64,
        pixel_size_x: f64,
        pixel_size_y: f64,
        crs: u32,
    ) -> Result<Self, RasterError> {
        let g = Self { width, height, origin_x, origin_y, pixel_size_x, pixel_size_y, crs };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if self.width == 0 || self.height == 0 {
            return Err(RasterError::InvalidGeometry(format!(
                "empty grid {}x{}",
                self.width, self.height
            )));
        }
        let sizes_ok = self.pixel_size_x.is_finite()
            && self.pixel_size_y.is_finite()
            && self.pixel_size_x > 0.0
            && self.pixel_size_y > 0.0;
        if !sizes_ok {
            return Err(RasterError::InvalidGeometry(format!(
                "pixel sizes must be positive, got {} x {}",
                self.pixel_size_x, self.pixel_size_y
            )));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(RasterError::InvalidGeometry("non-finite origin".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    /// Map coordinates of the centre of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size_x,
            self.origin_y - (row as f64 + 0.5) * self.pixel_size_y,
        )
    }

    /// Pixel containing a map coordinate, if inside the extent.
    pub fn pixel_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fc = (x - self.origin_x) / self.pixel_size_x;
        let fr = (self.origin_y - y) / self.pixel_size_y;
        if !(0.0..self.width as f64).contains(&fc) || !(0.0..self.height as f64).contains(&fr) {
            return None;
        }
        Some((fc.floor() as usize, fr.floor() as usize))
    }

    pub fn extent(&self) -> BBox {
        BBox {
            min_x: self.origin_x,
            max_x: self.origin_x + self.width as f64 * self.pixel_size_x,
            max_y: self.origin_y,
            min_y: self.origin_y - self.height as f64 * self.pixel_size_y,
        }
    }

    /// The minimal pixel-aligned window `(col0, row0, cols, rows)` covering
    /// `bbox ∩ extent`.
    pub fn window_for(&self, bbox: &BBox) -> Result<(usize, usize, usize, usize), RasterError> {
        let ix = self.extent().intersection(bbox).ok_or(RasterError::EmptyIntersection)?;
        let (c0, c1) = span(
            (ix.min_x - self.origin_x) / self.pixel_size_x,
            (ix.max_x - self.origin_x) / self.pixel_size_x,
            self.width,
        );
        let (r0, r1) = span(
            (self.origin_y - ix.max_y) / self.pixel_size_y,
            (self.origin_y - ix.min_y) / self.pixel_size_y,
            self.height,
        );
        Ok((c0, r0, c1 - c0, r1 - r0))
    }

    /// Geometry of a pixel window of this grid.
    pub fn sub_grid(&self, col0: usize, row0: usize, cols: usize, rows: usize) -> GridGeometry {
        GridGeometry {
            width: cols,
            height: rows,
            origin_x: self.origin_x + col0 as f64 * self.pixel_size_x,
            origin_y: self.origin_y - row0 as f64 * self.pixel_size_y,
            ..*self
        }
    }

    pub fn same_grid(&self, other: &GridGeometry) -> bool {
        self == other
    }
}

/// Snap a fractional pixel interval outward to whole pixels, clamped to
/// `[0, n]` and at least one pixel wide.
fn span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() <= SNAP_EPS * r.abs().max(1.0) {
            r
        } else {
            v
        }
    };
    let mut a = snap(lo).floor().max(0.0) as usize;
    let mut b = (snap(hi).ceil().max(0.0) as usize).min(n);
    if a >= n {
        a = n - 1;
    }
    if b <= a {
        b = a + 1;
    }
    (a, b)
}

/// Single-band 32-bit float raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    geometry: GridGeometry,
    values: Vec<f32>,
    nodata: f32,
}

impl Raster {
    pub fn new(geometry: GridGeometry, values: Vec<f32>, nodata: f32) -> Result<Self, RasterError> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(RasterError::LengthMismatch {
                expected: geometry.len(),
                actual: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() && !same_bits_or_nan(value, nodata) {
                return Err(RasterError::NonFinite { index, value });
            }
        }
        Ok(Self { geometry, values, nodata })
    }

    pub fn filled(geometry: GridGeometry, value: f32) -> Result<Self, RasterError> {
        Self::new(geometry, vec![value; geometry.len()], DEFAULT_NODATA)
    }

    /// Build from a per-pixel function; non-finite results become nodata.
    pub fn from_fn<F>(geometry: GridGeometry, nodata: f32, mut f: F) -> Result<Self, RasterError>
    where
        F: FnMut(usize, usize) -> f32,
    {
        geometry.validate()?;
        let mut values = Vec::with_capacity(geometry.len());
        for row in 0..geometry.height {
            for col in 0..geometry.width {
                let v = f(col, row);
                values.push(if v.is_finite() { v } else { nodata });
            }
        }
        Ok(Self { geometry, values, nodata })
    }

    pub(crate) fn from_parts_unchecked(geometry: GridGeometry, values: Vec<f32>, nodata: f32) -> Self {
        debug_assert_eq!(values.len(), geometry.len());
        Self { geometry, values, nodata }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[self.geometry.index(col, row)]
    }

    /// Value at a pixel, or `None` when it holds nodata.
    pub fn value(&self, col: usize, row: usize) -> Option<f32> {
        let v = self.get(col, row);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        same_bits_or_nan(v, self.nodata)
    }

    /// Apply `f` to every valid sample; nodata stays nodata and non-finite
    /// results become nodata.
    pub fn map_valid<F: Fn(f32) -> f32>(&self, f: F) -> Raster {
        let nodata = self.nodata;
        let values = self
            .values
            .iter()
            .map(|&v| {
                if self.is_nodata(v) {
                    nodata
                } else {
                    let out = f(v);
                    if out.is_finite() {
                        out
                    } else {
                        nodata
                    }
                }
            })
            .collect();
        Raster { geometry: self.geometry, values, nodata }
    }

    /// Iterator over valid samples.
    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values.iter().copied().filter(move |&v| !self.is_nodata(v))
    }

    /// Copy the minimal pixel-aligned window covering `bbox ∩ extent`.
    ///
    /// Values are copied unmodified and the origin moves by whole pixels.
    pub fn subset_bbox(&self, bbox: &BBox) -> Result<Raster, RasterError> {
        let (c0, r0, cols, rows) = self.geometry.window_for(bbox)?;
        let mut values = Vec::with_capacity(cols * rows);
        for row in r0..r0 + rows {
            let start = self.geometry.index(c0, row);
            values.extend_from_slice(&self.values[start..start + cols]);
        }
        Ok(Raster {
            geometry: self.geometry.sub_grid(c0, r0, cols, rows),
            values,
            nodata: self.nodata,
        })
    }
}

/// Free-function form of [`Raster::subset_bbox`].
pub fn subset_bbox(raster: &Raster, bbox: &BBox) -> Result<Raster, RasterError> {
    raster.subset_bbox(bbox)
}

fn same_bits_or_nan(v: f32, nodata: f32) -> bool {
    if nodata.is_nan() {
        v.is_nan()
    } else {
        v == nodata
    }
}

/// Several co-registered bands sharing one geometry and nodata value.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBandRaster {
    geometry: GridGeometry,
    bands: Vec<Vec<f32>>,
    nodata: f32,
}

impl MultiBandRaster {
    pub fn new(geometry: GridGeometry, bands: Vec<Vec<f32>>, nodata: f32) -> Result<Self, RasterError> {
        geometry.validate()?;
        if bands.is_empty() {
            return Err(RasterError::InvalidGeometry("no bands".into()));
        }
        for band in &bands {
            if band.len() != geometry.len() {
                return Err(RasterError::LengthMismatch {
                    expected: geometry.len(),
                    actual: band.len(),
                });
            }
        }
        Ok(Self { geometry, bands, nodata })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, i: usize) -> &[f32] {
        &self.bands[i]
    }

    pub fn bands(&self) -> &[Vec<f32>] {
        &self.bands
    }

    /// Extract one band as a standalone raster.
    pub fn to_raster(&self, i: usize) -> Raster {
        Raster::from_parts_unchecked(self.geometry, self.bands[i].clone(), self.nodata)
    }
}

impl From<Raster> for MultiBandRaster {
    fn from(r: Raster) -> Self {
        MultiBandRaster { geometry: r.geometry, bands: vec![r.values], nodata: r.nodata }
    }
}

/// Boolean pixel mask qualifying a raster of the same geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    geometry: GridGeometry,
    bits: Vec<bool>,
}

impl Eq for GridGeometry {}

impl Mask {
    pub fn new(geometry: GridGeometry, bits: Vec<bool>) -> Result<Self, RasterError> {
        geometry.validate()?;
        if bits.len() != geometry.len() {
            return Err(RasterError::LengthMismatch { expected: geometry.len(), actual: bits.len() });
        }
        Ok(Self { geometry, bits })
    }

    pub fn empty(geometry: GridGeometry) -> Self {
        Self { geometry, bits: vec![false; geometry.len()] }
    }

    pub fn full(geometry: GridGeometry) -> Self {
        Self { geometry, bits: vec![true; geometry.len()] }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[self.geometry.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, on: bool) {
        let i = self.geometry.index(col, row);
        self.bits[i] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Set pixel coordinates in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.geometry.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }
}
