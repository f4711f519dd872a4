use crate::raster::Raster;

/// `10·log10(v)`; `None` for non-positive input.
pub fn linear_to_db(v: f64) -> Option<f64> {
    (v > 0.0).then(|| 10.0 * v.log10())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power → dB. Values ≤ 0 become nodata.
pub fn to_db(linear: &Raster) -> Raster {
    linear.map_valid(|v| linear_to_db(v as f64).map_or(f32::NAN, |d| d as f32))
}

/// dB → linear power on valid cells.
pub fn from_db(db: &Raster) -> Raster {
    db.map_valid(|v| db_to_linear(v as f64) as f32)
}
