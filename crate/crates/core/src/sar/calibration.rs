use serde::{Deserialize, Serialize};

use super::SarError;
use crate::raster::{Raster, DEFAULT_NODATA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub pixel: f64,
    pub gain: f64,
}

/// Gains sampled along one image line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationVector {
    pub line: f64,
    pub points: Vec<CalibrationPoint>,
}

/// Sparse σ⁰ gain grid, expanded bilinearly over (line, pixel).
///
/// Lines increase strictly; every vector samples the same pixel positions.
/// A single line (or pixel) means the gain is constant along that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CalibrationVector>", into = "Vec<CalibrationVector>")]
pub struct CalibrationLut {
    lines: Vec<f64>,
    pixels: Vec<f64>,
    /// Row-major `[line][pixel]`.
    gains: Vec<f64>,
}

impl CalibrationLut {
    pub fn new(vectors: Vec<CalibrationVector>) -> Result<Self, SarError> {
        let first = vectors.first().ok_or(SarError::EmptyLut)?;
        if first.points.is_empty() {
            return Err(SarError::EmptyLut);
        }
        let pixels: Vec<f64> = first.points.iter().map(|p| p.pixel).collect();
        if pixels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SarError::InvalidLut("pixel positions must increase strictly".into()));
        }
        let mut lines = Vec::with_capacity(vectors.len());
        let mut gains = Vec::with_capacity(vectors.len() * pixels.len());
        for v in &vectors {
            if lines.last().is_some_and(|&l| l >= v.line) {
                return Err(SarError::InvalidLut("lines must increase strictly".into()));
            }
            if v.points.len() != pixels.len() || v.points.iter().zip(&pixels).any(|(p, &x)| p.pixel != x) {
                return Err(SarError::InvalidLut(format!("line {} samples different pixels", v.line)));
            }
            for p in &v.points {
                if !(p.gain.is_finite() && p.gain > 0.0) {
                    return Err(SarError::InvalidLut(format!("gain {} must be positive", p.gain)));
                }
                gains.push(p.gain);
            }
            lines.push(v.line);
        }
        Ok(Self { lines, pixels, gains })
    }

    /// Same gain everywhere.
    pub fn constant(gain: f64) -> Result<Self, SarError> {
        Self::new(vec![CalibrationVector { line: 0.0, points: vec![CalibrationPoint { pixel: 0.0, gain }] }])
    }

    fn gain_at(&self, li: usize, pi: usize) -> f64 {
        self.gains[li * self.pixels.len() + pi]
    }
}

impl TryFrom<Vec<CalibrationVector>> for CalibrationLut {
    type Error = SarError;
    fn try_from(v: Vec<CalibrationVector>) -> Result<Self, SarError> {
        Self::new(v)
    }
}

impl From<CalibrationLut> for Vec<CalibrationVector> {
    fn from(lut: CalibrationLut) -> Self {
        lut.lines
            .iter()
            .enumerate()
            .map(|(li, &line)| CalibrationVector {
                line,
                points: lut
                    .pixels
                    .iter()
                    .enumerate()
                    .map(|(pi, &pixel)| CalibrationPoint { pixel, gain: lut.gain_at(li, pi) })
                    .collect(),
            })
            .collect()
    }
}

/// Bracketing indices and weight of the upper node, clamped to the hull.
fn bracket(nodes: &[f64], x: f64) -> (usize, usize, f64) {
    let last = nodes.len() - 1;
    if x <= nodes[0] {
        return (0, 0, 0.0);
    }
    if x >= nodes[last] {
        return (last, last, 0.0);
    }
    let hi = nodes.partition_point(|&n| n <= x);
    let lo = hi - 1;
    (lo, hi, (x - nodes[lo]) / (nodes[hi] - nodes[lo]))
}

/// Gain at image position `(col, row)`.
pub fn interpolate_gain(lut: &CalibrationLut, col: f64, row: f64) -> f64 {
    let (l0, l1, tl) = bracket(&lut.lines, row);
    let (p0, p1, tp) = bracket(&lut.pixels, col);
    let top = lut.gain_at(l0, p0) * (1.0 - tp) + lut.gain_at(l0, p1) * tp;
    let bottom = lut.gain_at(l1, p0) * (1.0 - tp) + lut.gain_at(l1, p1) * tp;
    top * (1.0 - tl) + bottom * tl
}

/// σ⁰ = DN² / A², with A the interpolated gain at each pixel.
///
/// DN products commonly flag nodata with 0, which is a legitimate value
/// further down the chain (0 dB), so the output always uses
/// [`DEFAULT_NODATA`].
pub fn calibrate_sigma0(dn: &Raster, lut: &CalibrationLut) -> Result<Raster, SarError> {
    let g = *dn.geometry();
    let mut values = Vec::with_capacity(g.len());
    for row in 0..g.height {
        for col in 0..g.width {
            let v = dn.get(col, row);
            if dn.is_nodata(v) {
                values.push(DEFAULT_NODATA);
                continue;
            }
            if v < 0.0 {
                return Err(SarError::NegativeInput { col, row, value: v });
            }
            let a = interpolate_gain(lut, col as f64, row as f64);
            let d = v as f64;
            values.push((d * d / (a * a)) as f32);
        }
    }
    Ok(Raster::from_parts_unchecked(g, values, DEFAULT_NODATA))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridGeometry, DEFAULT_NODATA};

    fn lut(lines: &[f64], pixels: &[f64], gains: &[f64]) -> CalibrationLut {
        let vectors = lines
            .iter()
            .enumerate()
            .map(|(i, &line)| CalibrationVector {
                line,
                points: pixels
                    .iter()
                    .enumerate()
                    .map(|(j, &pixel)| CalibrationPoint { pixel, gain: gains[i * pixels.len() + j] })
                    .collect(),
            })
            .collect();
        CalibrationLut::new(vectors).unwrap()
    }

    #[test]
    fn constant_lut() {
        let l = CalibrationLut::constant(437.5).unwrap();
        for (c, r) in [(0.0, 0.0), (100.0, 3.0), (-5.0, 1e6)] {
            assert_eq!(interpolate_gain(&l, c, r), 437.5);
        }
    }

    #[test]
    fn node_identity_and_midpoint() {
        let l = lut(&[0.0, 10.0], &[0.0, 20.0], &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(interpolate_gain(&l, 20.0, 10.0), 3.0);
        assert_eq!(interpolate_gain(&l, 0.0, 0.0), 1.0);
        assert_eq!(interpolate_gain(&l, 7.0, 5.0), 2.0);
        // Clamped outside the hull.
        assert_eq!(interpolate_gain(&l, 7.0, -3.0), 1.0);
        assert_eq!(interpolate_gain(&l, 70.0, 30.0), 3.0);
    }

    #[test]
    fn calibration_formula() {
        let g = GridGeometry::new(2, 1, 0.0, 0.0, 10.0, 10.0, 32632).unwrap();
        let dn = Raster::new(g, vec![100.0, 0.0], DEFAULT_NODATA).unwrap();
        let out = calibrate_sigma0(&dn, &CalibrationLut::constant(1000.0).unwrap()).unwrap();
        assert_eq!(out.values(), &[0.01, 0.0]);
    }

    #[test]
    fn nodata_propagates_and_negative_rejected() {
        let g = GridGeometry::new(2, 1, 0.0, 0.0, 10.0, 10.0, 32632).unwrap();
        let l = CalibrationLut::constant(10.0).unwrap();
        let dn = Raster::new(g, vec![DEFAULT_NODATA, 5.0], DEFAULT_NODATA).unwrap();
        let out = calibrate_sigma0(&dn, &l).unwrap();
        assert_eq!(out.values(), &[DEFAULT_NODATA, 0.25]);
        // A DN zero-nodata must not survive as 0, which is 0 dB later on.
        let dn = Raster::new(g, vec![0.0, 5.0], 0.0).unwrap();
        let out = calibrate_sigma0(&dn, &l).unwrap();
        assert_eq!((out.values(), out.nodata()), (&[DEFAULT_NODATA, 0.25][..], DEFAULT_NODATA));
        let neg = Raster::new(g, vec![-1.0, 5.0], DEFAULT_NODATA).unwrap();
        assert!(matches!(calibrate_sigma0(&neg, &l), Err(SarError::NegativeInput { col: 0, row: 0, .. })));
    }

    #[test]
    fn invalid_luts() {
        assert_eq!(CalibrationLut::new(vec![]), Err(SarError::EmptyLut));
        assert_eq!(CalibrationLut::new(vec![CalibrationVector { line: 0.0, points: vec![] }]), Err(SarError::EmptyLut));
        assert!(CalibrationLut::constant(0.0).is_err());
        let p = |pixel, gain| CalibrationPoint { pixel, gain };
        let unsorted = vec![
            CalibrationVector { line: 5.0, points: vec![p(0.0, 1.0)] },
            CalibrationVector { line: 1.0, points: vec![p(0.0, 1.0)] },
        ];
        assert!(matches!(CalibrationLut::new(unsorted), Err(SarError::InvalidLut(_))));
        let ragged = vec![
            CalibrationVector { line: 0.0, points: vec![p(0.0, 1.0), p(5.0, 1.0)] },
            CalibrationVector { line: 1.0, points: vec![p(0.0, 1.0), p(6.0, 1.0)] },
        ];
        assert!(matches!(CalibrationLut::new(ragged), Err(SarError::InvalidLut(_))));
    }

    #[test]
    fn serde_shape() {
        let json = r#"[{"line":0,"points":[{"pixel":0,"gain":2.0},{"pixel":10,"gain":4.0}]}]"#;
        let l: CalibrationLut = serde_json::from_str(json).unwrap();
        assert_eq!(interpolate_gain(&l, 5.0, 0.0), 3.0);
        let back = serde_json::to_string(&l).unwrap();
        assert_eq!(serde_json::from_str::<CalibrationLut>(&back).unwrap(), l);
        assert!(serde_json::from_str::<CalibrationLut>("[]").is_err());
    }
}
