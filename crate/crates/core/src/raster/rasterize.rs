use super::{GridGeometry, Mask, RasterError};
use crate::vector::Polygon;

/// Burn a polygon into a mask: a pixel is set iff its centre lies inside
/// the polygon under the even-odd rule over all rings (holes subtract).
///
/// The polygon must be expressed in the grid's map coordinates.
pub fn rasterize_polygon(polygon: &Polygon, grid: &GridGeometry) -> Result<Mask, RasterError> {
    grid.validate()?;
    polygon
        .validate()
        .map_err(|e| RasterError::DegeneratePolygon(e.to_string()))?;

    // Edges canonicalised so the lower endpoint comes first; the crossing
    // arithmetic is then independent of ring orientation.
    let mut edges: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for ring in polygon.rings() {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.1 == b.1 {
                continue;
            }
            edges.push(if a.1 < b.1 { (a, b) } else { (b, a) });
        }
    }

    let mut mask = Mask::empty(*grid);
    let bbox = polygon.bbox();
    let mut crossings: Vec<f64> = Vec::new();
    for row in 0..grid.height {
        let (_, y) = grid.pixel_center(0, row);
        if y < bbox.min_y || y > bbox.max_y {
            continue;
        }
        crossings.clear();
        for &((x0, y0), (x1, y1)) in &edges {
            // Half-open in y: counts an edge iff exactly one endpoint is
            // strictly above the scanline.
            if (y0 > y) != (y1 > y) {
                crossings.push((x1 - x0) * (y - y0) / (y1 - y0) + x0);
            }
        }
        crossings.sort_by(|a, b| a.total_cmp(b));
        for pair in crossings.chunks_exact(2) {
            // Centres with pair[0] <= x < pair[1] see an odd crossing count
            // to their right.
            let start = first_center_at_or_after(grid, pair[0]);
            let end = first_center_at_or_after(grid, pair[1]);
            for col in start..end {
                mask.set(col, row, true);
            }
        }
    }
    Ok(mask)
}

/// Smallest column whose centre x is `>= x`, clamped to `[0, width]`.
fn first_center_at_or_after(grid: &GridGeometry, x: f64) -> usize {
    let guess = ((x - grid.origin_x) / grid.pixel_size_x - 0.5).ceil();
    let mut col = guess.clamp(0.0, grid.width as f64) as usize;
    while col < grid.width && grid.pixel_center(col, 0).0 < x {
        col += 1;
    }
    while col > 0 && grid.pixel_center(col - 1, 0).0 >= x {
        col -= 1;
    }
    col
}
