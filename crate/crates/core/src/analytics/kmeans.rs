//! One-dimensional k-means over masked raster values.
//!
//! Each run alternates Lloyd iteration (nearest-centroid assignment, mean
//! update) with Hartigan single-point moves, ending on a Lloyd fixed point.
//! The first run starts from value quantiles; further runs start from
//! seeded random draws of distinct values. The lowest-SSE run wins.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::AnalyticsError;
use crate::raster::{Mask, Raster, DEFAULT_NODATA};

pub const MAX_ITERATIONS: usize = 100;
pub const RANDOM_RESTARTS: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Label codes `0..k` as floats; nodata outside the mask.
    pub labels: Raster,
    /// Ascending; label `i` belongs to `centroids[i]`.
    pub centroids: Vec<f64>,
    pub sse: f64,
    /// Lloyd iterations of the winning run.
    pub iterations: usize,
    /// SSE after every assignment step of the winning run.
    pub sse_trace: Vec<f64>,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn label_at(&self, col: usize, row: usize) -> Option<usize> {
        self.labels.value(col, row).map(|v| v as usize)
    }
}

struct Run {
    centroids: Vec<f64>,
    assign: Vec<usize>,
    sse: f64,
    iterations: usize,
    trace: Vec<f64>,
}

/// Nearest centroid, ties to the lower index. `centroids` ascending.
fn nearest(centroids: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centroids.iter().enumerate() {
        let d = (v - c) * (v - c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn sse_of(values: &[f64], assign: &[usize], centroids: &[f64]) -> f64 {
    values.iter().zip(assign).map(|(&v, &a)| (v - centroids[a]) * (v - centroids[a])).sum()
}

/// Cluster means; empty clusters keep their previous centroid.
fn means(values: &[f64], assign: &[usize], prev: &[f64]) -> Vec<f64> {
    let k = prev.len();
    let mut sum = vec![0.0; k];
    let mut n = vec![0usize; k];
    for (&v, &a) in values.iter().zip(assign) {
        sum[a] += v;
        n[a] += 1;
    }
    (0..k).map(|i| if n[i] > 0 { sum[i] / n[i] as f64 } else { prev[i] }).collect()
}

fn sort_centroids(c: &mut [f64]) {
    c.sort_by(|a, b| a.total_cmp(b));
}

/// Apply improving single-point transfers until none remains. Returns
/// whether anything moved.
fn hartigan(values: &[f64], assign: &mut [usize], centroids: &mut [f64]) -> bool {
    let k = centroids.len();
    let mut n = vec![0usize; k];
    for &a in assign.iter() {
        n[a] += 1;
    }
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for (i, &v) in values.iter().enumerate() {
            let a = assign[i];
            if n[a] <= 1 {
                continue;
            }
            let na = n[a] as f64;
            let cost_out = na / (na - 1.0) * (v - centroids[a]) * (v - centroids[a]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = n[b] as f64;
                let cost_in = nb / (nb + 1.0) * (v - centroids[b]) * (v - centroids[b]);
                let gain = cost_out - cost_in;
                // Relative guard so float noise cannot cause endless shuffling.
                if gain > 1e-12 * (1.0 + cost_out) && best.is_none_or(|(_, g)| gain > g) {
                    best = Some((b, gain));
                }
            }
            if let Some((b, _)) = best {
                let nb = n[b] as f64;
                centroids[a] = (centroids[a] * na - v) / (na - 1.0);
                centroids[b] = (centroids[b] * nb + v) / (nb + 1.0);
                n[a] -= 1;
                n[b] += 1;
                assign[i] = b;
                moved = true;
            }
        }
        if !moved {
            return moved_any;
        }
        moved_any = true;
    }
}

fn run(values: &[f64], mut centroids: Vec<f64>) -> Run {
    sort_centroids(&mut centroids);
    let mut assign: Vec<usize> = values.iter().map(|&v| nearest(&centroids, v)).collect();
    let mut trace = vec![sse_of(values, &assign, &centroids)];
    let mut iterations = 0;
    loop {
        // Lloyd to a fixed point (or the iteration cap).
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            centroids = means(values, &assign, &centroids);
            sort_centroids(&mut centroids);
            let next: Vec<usize> = values.iter().map(|&v| nearest(&centroids, v)).collect();
            let changed = next != assign;
            assign = next;
            trace.push(sse_of(values, &assign, &centroids));
            if !changed {
                break;
            }
        }
        if iterations >= MAX_ITERATIONS {
            break;
        }
        // Cluster indices stay aligned with the ascending centroid order
        // across the transfer pass because labels are only re-sorted after.
        let mut hc = means(values, &assign, &centroids);
        if !hartigan(values, &mut assign, &mut hc) {
            break;
        }
        // Re-sort and relabel; assignment is then refreshed by Lloyd above.
        let mut order: Vec<usize> = (0..hc.len()).collect();
        order.sort_by(|&a, &b| hc[a].total_cmp(&hc[b]));
        let mut rank = vec![0; hc.len()];
        for (r, &o) in order.iter().enumerate() {
            rank[o] = r;
        }
        assign.iter_mut().for_each(|a| *a = rank[*a]);
        centroids = order.iter().map(|&o| hc[o]).collect();
        trace.push(sse_of(values, &assign, &centroids));
    }
    centroids = means(values, &assign, &centroids);
    let sse = sse_of(values, &assign, &centroids);
    Run { centroids, assign, sse, iterations, trace }
}

/// Cluster the in-mask, valid values of `raster` into `k` groups.
pub fn kmeans_cluster(raster: &Raster, mask: &Mask, k: usize, seed: u64) -> Result<ClusterResult, AnalyticsError> {
    if raster.geometry() != mask.geometry() {
        return Err(AnalyticsError::GeometryMismatch);
    }
    if k == 0 {
        return Err(AnalyticsError::InvalidK(k));
    }
    let mut idx: Vec<usize> = (0..raster.values().len())
        .filter(|&i| mask.bits()[i] && !raster.is_nodata(raster.values()[i]))
        .collect();
    // Sorting by value (then position) makes every run independent of the
    // input buffer order.
    let vals = raster.values();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let values: Vec<f64> = idx.iter().map(|&i| vals[i] as f64).collect();
    let mut distinct = values.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(AnalyticsError::TooFewDistinct { k, distinct: distinct.len() });
    }

    let quantile_init: Vec<f64> = (0..k)
        .map(|i| {
            let q = (i as f64 + 0.5) / k as f64;
            distinct[((q * distinct.len() as f64) as usize).min(distinct.len() - 1)]
        })
        .collect();
    let mut best = run(&values, quantile_init);
    for restart in 0..RANDOM_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart));
        let init: Vec<f64> = rand::seq::index::sample(&mut rng, distinct.len(), k)
            .into_iter()
            .map(|i| distinct[i])
            .collect();
        let r = run(&values, init);
        if r.sse < best.sse {
            best = r;
        }
    }

    // Not the input's nodata, which could collide with a label code.
    let nodata = DEFAULT_NODATA;
    let mut labels = vec![nodata; vals.len()];
    for (&i, &a) in idx.iter().zip(&best.assign) {
        labels[i] = a as f32;
    }
    Ok(ClusterResult {
        labels: Raster::new(*raster.geometry(), labels, nodata)?,
        centroids: best.centroids,
        sse: best.sse,
        iterations: best.iterations,
        sse_trace: best.trace,
    })
}
