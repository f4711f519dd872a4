use super::{GridGeometry, Raster, RasterError};

/// Fractional offsets this close to a whole pixel are treated as exact, so
/// resampling onto the source grid reproduces the source values.
const NODE_EPS: f64 = 1e-9;

/// Bilinear resampling of `raster` onto `target`.
///
/// Each target pixel centre is interpolated from the four surrounding source
/// pixel centres. Stencil pixels with zero weight are ignored; a stencil that
/// touches nodata or leaves the source grid yields nodata.
pub fn resample_bilinear(raster: &Raster, target: &GridGeometry) -> Result<Raster, RasterError> {
    target.validate()?;
    let src = raster.geometry();
    if src.crs != target.crs {
        return Err(RasterError::CrsMismatch { from: src.crs, target: target.crs });
    }
    let nodata = raster.nodata();
    let mut values = Vec::with_capacity(target.len());
    for row in 0..target.height {
        for col in 0..target.width {
            let (x, y) = target.pixel_center(col, row);
            let fx = snap((x - src.origin_x) / src.pixel_size_x - 0.5);
            let fy = snap((src.origin_y - y) / src.pixel_size_y - 0.5);
            values.push(sample(raster, fx, fy).unwrap_or(nodata));
        }
    }
    Ok(Raster::from_parts_unchecked(*target, values, nodata))
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= NODE_EPS {
        r
    } else {
        v
    }
}

/// Interpolate at fractional source-pixel coordinates (centre of pixel
/// `(c, r)` is at `(c, r)`).
fn sample(raster: &Raster, fx: f64, fy: f64) -> Option<f32> {
    let g = raster.geometry();
    let c0 = fx.floor();
    let r0 = fy.floor();
    let tx = fx - c0;
    let ty = fy - r0;
    let mut acc = 0.0f64;
    for (dc, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
        if wx == 0.0 {
            continue;
        }
        for (dr, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
            if wy == 0.0 {
                continue;
            }
            let c = c0 + dc;
            let r = r0 + dr;
            if c < 0.0 || r < 0.0 || c >= g.width as f64 || r >= g.height as f64 {
                return None;
            }
            let v = raster.value(c as usize, r as usize)?;
            acc += wx * wy * v as f64;
        }
    }
    Some(acc as f32)
}
