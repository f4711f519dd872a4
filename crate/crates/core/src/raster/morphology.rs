use super::{Mask, RasterError};

/// Relative tolerance on square pixels and on the disk boundary.
const EPS: f64 = 1e-9;

/// Binary erosion by a Euclidean disk of `radius_m` map units.
///
/// A pixel survives iff every pixel whose centre lies within
/// `radius_m / pixel_size` pixels of it is set; pixels outside the grid
/// count as unset.
pub fn erode_disk(mask: &Mask, radius_m: f64) -> Result<Mask, RasterError> {
    let g = mask.geometry();
    if !(radius_m.is_finite() && radius_m >= 0.0) {
        return Err(RasterError::InvalidRadius(radius_m));
    }
    if (g.pixel_size_x - g.pixel_size_y).abs() > EPS * g.pixel_size_x.max(g.pixel_size_y) {
        return Err(RasterError::AnisotropicPixels { x: g.pixel_size_x, y: g.pixel_size_y });
    }
    let r = radius_m / g.pixel_size_x;
    let spans = disk_spans(r);
    if spans.len() == 1 && spans[0] == 0 {
        return Ok(mask.clone());
    }
    let reach = (spans.len() - 1) as isize;
    let (w, h) = (g.width as isize, g.height as isize);

    // Per-row prefix counts of set pixels; a row span is fully set iff its
    // count equals its length.
    let mut prefix = vec![0u32; (g.width + 1) * g.height];
    for row in 0..g.height {
        let base = row * (g.width + 1);
        for col in 0..g.width {
            prefix[base + col + 1] = prefix[base + col] + mask.get(col, row) as u32;
        }
    }
    let run_full = |row: isize, c0: isize, c1: isize| -> bool {
        if row < 0 || row >= h || c0 < 0 || c1 >= w {
            return false;
        }
        let base = row as usize * (g.width + 1);
        prefix[base + c1 as usize + 1] - prefix[base + c0 as usize] == (c1 - c0 + 1) as u32
    };

    let mut out = Mask::empty(*g);
    for (col, row) in mask.iter_set() {
        let (c, rr) = (col as isize, row as isize);
        let keep = (-reach..=reach).all(|dy| {
            let half = spans[dy.unsigned_abs()] as isize;
            run_full(rr + dy, c - half, c + half)
        });
        if keep {
            out.set(col, row, true);
        }
    }
    Ok(out)
}

/// Half-widths of the digital disk: `spans[dy]` is the largest `dx` with
/// `dx² + dy² <= r²`.
pub(crate) fn disk_spans(r: f64) -> Vec<usize> {
    let r2 = r * r * (1.0 + EPS);
    let reach = r2.sqrt().floor() as usize;
    (0..=reach)
        .map(|dy| {
            let rem = r2 - (dy * dy) as f64;
            let mut dx = rem.max(0.0).sqrt().floor() as usize;
            while ((dx + 1) * (dx + 1)) as f64 <= rem {
                dx += 1;
            }
            while dx > 0 && (dx * dx) as f64 > rem {
                dx -= 1;
            }
            dx
        })
        .collect()
}
