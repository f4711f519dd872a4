use super::AnalyticsError;
use crate::raster::{Mask, Raster};

/// Mean over in-mask, valid pixels. `mean` is `None` when no pixel
/// contributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZonalMean {
    pub mean: Option<f64>,
    pub count: usize,
}

impl ZonalMean {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

pub fn zonal_mean(raster: &Raster, mask: &Mask) -> Result<ZonalMean, AnalyticsError> {
    if raster.geometry() != mask.geometry() {
        return Err(AnalyticsError::GeometryMismatch);
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (&v, &on) in raster.values().iter().zip(mask.bits()) {
        if on && !raster.is_nodata(v) {
            sum += v as f64;
            count += 1;
        }
    }
    Ok(ZonalMean { mean: (count > 0).then(|| sum / count as f64), count })
}
