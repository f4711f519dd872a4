use serde::{Deserialize, Serialize};

use super::ClusterResult;
use crate::raster::Raster;

/// One suggested field sampling location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub label: usize,
    pub col: usize,
    pub row: usize,
    /// Pixel centre in map coordinates.
    pub map_x: f64,
    pub map_y: f64,
}

/// For each cluster, the `n_per_cluster` pixels of `raster` closest to the
/// cluster centroid, ties in row-major order. `raster` is the band that was
/// clustered. Output is grouped by ascending label.
pub fn sampling_plan(clusters: &ClusterResult, raster: &Raster, n_per_cluster: usize) -> Vec<SamplePoint> {
    let geometry = clusters.labels.geometry();
    let mut per_label: Vec<Vec<(f64, usize)>> = vec![Vec::new(); clusters.k()];
    for (i, &code) in clusters.labels.values().iter().enumerate() {
        if clusters.labels.is_nodata(code) {
            continue;
        }
        let label = code as usize;
        let v = raster.values()[i];
        if label >= per_label.len() || raster.is_nodata(v) {
            continue;
        }
        per_label[label].push(((v as f64 - clusters.centroids[label]).abs(), i));
    }
    let mut out = Vec::new();
    for (label, mut cands) in per_label.into_iter().enumerate() {
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in cands.iter().take(n_per_cluster) {
            let (col, row) = (i % geometry.width, i / geometry.width);
            let (map_x, map_y) = geometry.pixel_center(col, row);
            out.push(SamplePoint { label, col, row, map_x, map_y });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::kmeans_cluster;
    use crate::raster::{GridGeometry, Mask, DEFAULT_NODATA};

    fn setup(v: Vec<f32>, w: usize) -> (Raster, ClusterResult) {
        let g = GridGeometry::new(w, v.len() / w, 100.0, 200.0, 10.0, 10.0, 32632).unwrap();
        let r = Raster::new(g, v, DEFAULT_NODATA).unwrap();
        let c = kmeans_cluster(&r, &Mask::full(g), 2, 0).unwrap();
        (r, c)
    }

    #[test]
    fn zero_sse_picks_row_major_first() {
        let (r, c) = setup(vec![5.0, 1.0, 1.0, 5.0], 2);
        let plan = sampling_plan(&c, &r, 1);
        assert_eq!(plan.len(), 2);
        assert_eq!((plan[0].label, plan[0].col, plan[0].row), (0, 1, 0));
        assert_eq!((plan[1].label, plan[1].col, plan[1].row), (1, 0, 0));
        assert_eq!((plan[1].map_x, plan[1].map_y), (105.0, 195.0));
    }

    #[test]
    fn truncates_small_clusters() {
        let (r, c) = setup(vec![1.0, 1.1, 0.9, 50.0], 4);
        let plan = sampling_plan(&c, &r, 3);
        assert_eq!(plan.iter().filter(|p| p.label == 0).count(), 3);
        assert_eq!(plan.iter().filter(|p| p.label == 1).count(), 1);
        // Nearest to centroid 1.0 first.
        assert_eq!(plan[0].col, 0);
    }
}
