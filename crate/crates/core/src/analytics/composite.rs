use super::{AnalyticsError, RatioMode};
use crate::raster::{MultiBandRaster, Raster};

/// Three-band composite: VV_dB, VH_dB and their ratio per `mode`.
///
/// Nodata in either input makes all three bands nodata at that pixel, as
/// does an undefined ratio. The output uses the VV raster's nodata value.
pub fn composite_rgb(vv_db: &Raster, vh_db: &Raster, mode: RatioMode) -> Result<MultiBandRaster, AnalyticsError> {
    if vv_db.geometry() != vh_db.geometry() {
        return Err(AnalyticsError::GeometryMismatch);
    }
    let nodata = vv_db.nodata();
    let n = vv_db.values().len();
    let mut bands = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for (&vv, &vh) in vv_db.values().iter().zip(vh_db.values()) {
        let ratio = if vv_db.is_nodata(vv) || vh_db.is_nodata(vh) {
            None
        } else {
            mode.apply(vv as f64, vh as f64).map(|r| r as f32).filter(|r| r.is_finite())
        };
        match ratio {
            Some(r) => {
                bands[0].push(vv);
                bands[1].push(vh);
                bands[2].push(r);
            }
            None => bands.iter_mut().for_each(|b| b.push(nodata)),
        }
    }
    Ok(MultiBandRaster::new(*vv_db.geometry(), bands, nodata)?)
}
