//! Lee sigma speckle filter with point-target retention.
//!
//! Per pixel:
//! 1. Point targets: with `z98` the global percentile of valid samples, a
//!    pixel `>= z98` is kept unchanged when it lies in the target window of
//!    a centre `>= z98` whose target window holds at least
//!    `point_target_min_count` such pixels.
//! 2. A-priori mean `x̂` from an MMSE estimate over the target window with
//!    the full speckle deviation `1/√L`.
//! 3. Sigma range `[A1·x̂, A2·x̂]`.
//! 4. MMSE estimate over the full window restricted to in-range pixels,
//!    using the truncated deviation `σ_vn`.
//! 5. Fewer than `min_in_range` in-range pixels: output `x̂`.
//!
//! Windows clip at the image border. All statistics accumulate in f64 in
//! row-major order, so results do not depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_sigma_range, SarError, SigmaRangeParams};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleFilterParams {
    pub window: usize,
    pub target_window: usize,
    pub range: SigmaRangeParams,
    pub point_target_percentile: f64,
    pub point_target_min_count: usize,
    pub min_in_range: usize,
}

impl Default for SpeckleFilterParams {
    /// 7×7 window, 3×3 target window, single look, σ = 0.9.
    fn default() -> Self {
        Self::new(7, 3, 1, 0.9).expect("default sigma range is valid")
    }
}

impl SpeckleFilterParams {
    pub fn new(window: usize, target_window: usize, looks: u32, sigma: f64) -> Result<Self, SarError> {
        let p = Self {
            window,
            target_window,
            range: compute_sigma_range(looks, sigma)?,
            point_target_percentile: 0.98,
            point_target_min_count: 5,
            min_in_range: 4,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SarError> {
        if self.window.is_multiple_of(2) || self.target_window.is_multiple_of(2) {
            return Err(SarError::InvalidParams("window sizes must be odd".into()));
        }
        if self.target_window > self.window {
            return Err(SarError::InvalidParams("target window exceeds window".into()));
        }
        if !(self.point_target_percentile > 0.0 && self.point_target_percentile <= 1.0) {
            return Err(SarError::InvalidParams("percentile must be in (0, 1]".into()));
        }
        self.range.validate()
    }
}

/// Nearest-rank percentile of the valid samples.
pub(crate) fn percentile(raster: &Raster, p: f64) -> Option<f32> {
    let mut v: Vec<f32> = raster.valid_values().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// `max(0, (var − mean²·s²) / ((1 + s²)·var))`, zero for flat windows.
fn mmse_weight(mean: f64, var: f64, s2: f64) -> f64 {
    if var <= 0.0 {
        0.0
    } else {
        ((var - mean * mean * s2) / ((1.0 + s2) * var)).max(0.0)
    }
}

struct Grid<'a> {
    values: &'a [f32],
    valid: Vec<bool>,
    width: usize,
    height: usize,
}

impl Grid<'_> {
    fn span(&self, c: usize, r: usize, half: usize) -> (usize, usize, usize, usize) {
        (
            c.saturating_sub(half),
            (c + half).min(self.width - 1),
            r.saturating_sub(half),
            (r + half).min(self.height - 1),
        )
    }

    /// Mean and population variance of valid samples in a window, filtered
    /// by `keep`.
    fn stats<F: Fn(f64) -> bool>(&self, c: usize, r: usize, half: usize, keep: F) -> (usize, f64, f64) {
        let (c0, c1, r0, r1) = self.span(c, r, half);
        let mut n = 0usize;
        let mut sum = 0.0f64;
        for rr in r0..=r1 {
            for cc in c0..=c1 {
                let i = rr * self.width + cc;
                let v = self.values[i] as f64;
                if self.valid[i] && keep(v) {
                    n += 1;
                    sum += v;
                }
            }
        }
        if n == 0 {
            return (0, 0.0, 0.0);
        }
        let mean = sum / n as f64;
        let mut ss = 0.0f64;
        for rr in r0..=r1 {
            for cc in c0..=c1 {
                let i = rr * self.width + cc;
                let v = self.values[i] as f64;
                if self.valid[i] && keep(v) {
                    ss += (v - mean) * (v - mean);
                }
            }
        }
        (n, mean, ss / n as f64)
    }
}

/// Filter a linear-power raster (values ≥ 0). Nodata cells stay nodata.
pub fn lee_sigma_filter(raster: &Raster, params: &SpeckleFilterParams) -> Result<Raster, SarError> {
    params.validate()?;
    let geometry = *raster.geometry();
    let (width, height) = (geometry.width, geometry.height);
    let values = raster.values();
    let valid: Vec<bool> = values.iter().map(|&v| !raster.is_nodata(v)).collect();
    for (i, (&v, &ok)) in values.iter().zip(&valid).enumerate() {
        if ok && v < 0.0 {
            return Err(SarError::NegativeInput { col: i % width, row: i / width, value: v });
        }
    }
    let grid = Grid { values, valid, width, height };
    let Some(z98) = percentile(raster, params.point_target_percentile) else {
        return Ok(raster.clone());
    };

    let t_half = params.target_window / 2;
    let high: Vec<bool> = values.iter().zip(&grid.valid).map(|(&v, &ok)| ok && v >= z98).collect();
    let count_high = |c: usize, r: usize| {
        let (c0, c1, r0, r1) = grid.span(c, r, t_half);
        (r0..=r1).flat_map(|rr| (c0..=c1).map(move |cc| rr * width + cc)).filter(|&i| high[i]).count()
    };
    let mut point_centre = vec![false; values.len()];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            point_centre[i] = high[i] && count_high(c, r) >= params.point_target_min_count;
        }
    }
    let retained: Vec<bool> = (0..values.len())
        .map(|i| {
            if !high[i] {
                return false;
            }
            let (c0, c1, r0, r1) = grid.span(i % width, i / width, t_half);
            (r0..=r1).any(|rr| (c0..=c1).any(|cc| point_centre[rr * width + cc]))
        })
        .collect();

    let s_v2 = 1.0 / params.range.looks as f64;
    let s_vn2 = params.range.sigma_vn * params.range.sigma_vn;
    let (a1, a2) = (params.range.a1, params.range.a2);
    let w_half = params.window / 2;
    let nodata = raster.nodata();

    let mut out = vec![0.0f32; values.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(r, row_out)| {
        for (c, slot) in row_out.iter_mut().enumerate() {
            let i = r * width + c;
            if !grid.valid[i] {
                *slot = nodata;
                continue;
            }
            if retained[i] {
                *slot = values[i];
                continue;
            }
            let y = values[i] as f64;
            let (_, mean, var) = grid.stats(c, r, t_half, |_| true);
            let prior = mean + mmse_weight(mean, var, s_v2) * (y - mean);
            let (lo, hi) = (a1 * prior, a2 * prior);
            let (n, zmean, zvar) = grid.stats(c, r, w_half, |v| v >= lo && v <= hi);
            let est = if n < params.min_in_range {
                prior
            } else {
                zmean + mmse_weight(zmean, zvar, s_vn2) * (y - zmean)
            };
            *slot = est as f32;
        }
    });
    Ok(Raster::from_parts_unchecked(geometry, out, nodata))
}
