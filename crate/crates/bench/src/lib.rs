//! Shared fixtures for the benchmarks.

use fieldbabel_core::raster::{GridGeometry, Mask, Raster};
use fieldbabel_core::synthetic::speckle_raster;

pub fn grid(px: usize) -> GridGeometry {
    GridGeometry::new(px, px, 500_000.0, 6_200_000.0, 10.0, 10.0, 32632).expect("valid grid")
}

/// 1-look speckle around σ⁰ = 0.1.
pub fn speckle(px: usize, seed: u64) -> Raster {
    speckle_raster(grid(px), 0.1, 1, seed)
}

/// Speckle converted to dB, as stored in the catalog.
pub fn speckle_db(px: usize, seed: u64) -> Raster {
    let s = speckle(px, seed);
    Raster::from_fn(*s.geometry(), s.nodata(), |c, r| 10.0 * s.get(c, r).max(1e-6).log10()).expect("same grid")
}

/// A filled disc covering most of the grid.
pub fn disc_mask(px: usize) -> Mask {
    let g = grid(px);
    let (c, rad) = (px as f64 / 2.0, px as f64 * 0.45);
    let bits = (0..px * px)
        .map(|i| {
            let (x, y) = ((i % px) as f64 + 0.5 - c, (i / px) as f64 + 0.5 - c);
            x * x + y * y <= rad * rad
        })
        .collect();
    Mask::new(g, bits).expect("matching size")
}
