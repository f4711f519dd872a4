use fieldbabel_core::raster::{GridGeometry, Raster, DEFAULT_NODATA};
use fieldbabel_core::sar::{
    calibrate_sigma0, compute_sigma_range, lee_sigma_filter, CalibrationLut, CalibrationPoint, CalibrationVector,
    SpeckleFilterParams,
};
use fieldbabel_core::synthetic::speckle_raster;
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Sigma range against composite-Simpson quadrature of the Gamma density.

fn ln_gamma_int(n: u32) -> f64 {
    (1..n).map(|k| (k as f64).ln()).sum()
}

/// Gamma(shape L, mean 1) density.
fn pdf(l: u32, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let lf = l as f64;
    (lf * lf.ln() + (lf - 1.0) * v.ln() - lf * v - ln_gamma_int(l)).exp()
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

fn quad_quantile(l: u32, p: f64) -> f64 {
    let cdf = |x: f64| simpson(|v| pdf(l, v), 0.0, x, 20_000);
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn four_look_range_matches_quadrature() {
    let (l, sigma) = (4, 0.9);
    let a1 = quad_quantile(l, 0.05);
    let a2 = quad_quantile(l, 0.95);
    let n = 40_000;
    let m0 = simpson(|v| pdf(l, v), a1, a2, n);
    let m1 = simpson(|v| v * pdf(l, v), a1, a2, n);
    let m2 = simpson(|v| v * v * pdf(l, v), a1, a2, n);
    let mean = m1 / m0;
    let sd = (m2 / m0 - mean * mean).sqrt();

    let p = compute_sigma_range(l, sigma).unwrap();
    assert!((p.a1 - a1).abs() < 1e-6, "{} vs {a1}", p.a1);
    assert!((p.a2 - a2).abs() < 1e-6, "{} vs {a2}", p.a2);
    assert!((p.sigma_vn - sd / mean).abs() < 1e-6, "{} vs {}", p.sigma_vn, sd / mean);
}

#[test]
fn single_look_range_closed_form() {
    let p = compute_sigma_range(1, 0.9).unwrap();
    assert!((p.a1 - 0.0512933).abs() < 1e-6);
    assert!((p.a2 - 2.9957323).abs() < 1e-6);
    // Truncated exponential moments in closed form.
    let (a, b) = (p.a1, p.a2);
    let mass = (-a).exp() - (-b).exp();
    let m1 = ((a + 1.0) * (-a).exp() - (b + 1.0) * (-b).exp()) / mass;
    let m2 = ((a * a + 2.0 * a + 2.0) * (-a).exp() - (b * b + 2.0 * b + 2.0) * (-b).exp()) / mass;
    assert!((p.sigma_vn - (m2 - m1 * m1).sqrt() / m1).abs() < 1e-9);
}

// ---------------------------------------------------------------------------
// Lee sigma filter against a straight-line reimplementation.

fn naive_lee(input: &Raster, p: &SpeckleFilterParams) -> Vec<f32> {
    let g = input.geometry();
    let (w, h) = (g.width as isize, g.height as isize);
    let valid = |c: isize, r: isize| c >= 0 && r >= 0 && c < w && r < h && !input.is_nodata(input.get(c as usize, r as usize));
    let val = |c: isize, r: isize| input.get(c as usize, r as usize) as f64;

    let mut sorted: Vec<f32> = input.valid_values().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p.point_target_percentile * sorted.len() as f64).ceil() as usize).max(1);
    let z98 = sorted[rank - 1] as f64;
    let th = (p.target_window / 2) as isize;
    let wh = (p.window / 2) as isize;

    let high = |c: isize, r: isize| valid(c, r) && val(c, r) >= z98;
    let centre = |c: isize, r: isize| {
        if !high(c, r) {
            return false;
        }
        let mut n = 0;
        for dr in -th..=th {
            for dc in -th..=th {
                if high(c + dc, r + dr) {
                    n += 1;
                }
            }
        }
        n >= p.point_target_min_count
    };

    let stats = |c: isize, r: isize, half: isize, lo: f64, hi: f64| {
        let mut xs = Vec::new();
        for rr in r - half..=r + half {
            for cc in c - half..=c + half {
                if valid(cc, rr) && val(cc, rr) >= lo && val(cc, rr) <= hi {
                    xs.push(val(cc, rr));
                }
            }
        }
        let n = xs.len();
        if n == 0 {
            return (0, 0.0, 0.0);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        (n, mean, var)
    };
    let weight = |mean: f64, var: f64, s2: f64| {
        if var <= 0.0 {
            0.0
        } else {
            ((var - mean * mean * s2) / ((1.0 + s2) * var)).max(0.0)
        }
    };

    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !valid(c, r) {
                out.push(input.nodata());
                continue;
            }
            let mut retained = false;
            if high(c, r) {
                'o: for dr in -th..=th {
                    for dc in -th..=th {
                        if c + dc >= 0 && r + dr >= 0 && c + dc < w && r + dr < h && centre(c + dc, r + dr) {
                            retained = true;
                            break 'o;
                        }
                    }
                }
            }
            if retained {
                out.push(input.get(c as usize, r as usize));
                continue;
            }
            let y = val(c, r);
            let (_, m, v) = stats(c, r, th, f64::NEG_INFINITY, f64::INFINITY);
            let prior = m + weight(m, v, 1.0 / p.range.looks as f64) * (y - m);
            let (n, zm, zv) = stats(c, r, wh, p.range.a1 * prior, p.range.a2 * prior);
            let est = if n < p.min_in_range {
                prior
            } else {
                zm + weight(zm, zv, p.range.sigma_vn * p.range.sigma_vn) * (y - zm)
            };
            out.push(est as f32);
        }
    }
    out
}

fn grid(w: usize, h: usize) -> GridGeometry {
    GridGeometry::new(w, h, 0.0, 0.0, 10.0, 10.0, 32632).unwrap()
}

#[test]
fn lee_matches_naive_on_speckle() {
    let params = SpeckleFilterParams::default();
    for seed in 0..10 {
        let input = speckle_raster(grid(9, 9), 0.1, 1, seed);
        let got = lee_sigma_filter(&input, &params).unwrap();
        let want = naive_lee(&input, &params);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(got.values()), bits(&want), "seed {seed}");
    }
}

#[test]
fn lee_matches_naive_with_targets_and_nodata() {
    let params = SpeckleFilterParams::new(5, 3, 2, 0.8).unwrap();
    let base = speckle_raster(grid(24, 20), 0.05, 2, 5);
    let input = Raster::from_fn(*base.geometry(), DEFAULT_NODATA, |c, r| {
        if (9..12).contains(&c) && (4..7).contains(&r) {
            50.0
        } else if (c * 5 + r * 3) % 17 == 0 {
            DEFAULT_NODATA
        } else {
            base.get(c, r)
        }
    })
    .unwrap();
    let got = lee_sigma_filter(&input, &params).unwrap();
    let want = naive_lee(&input, &params);
    assert_eq!(got.values(), &want[..]);
}

// ---------------------------------------------------------------------------
// Calibration against the closed formula.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibration_formula(
        g00 in 100.0..900.0f64, g01 in 100.0..900.0f64, g10 in 100.0..900.0f64, g11 in 100.0..900.0f64,
        dn in 1u16..4000,
    ) {
        // Nodes at pixels 2 and 10, lines 1 and 7; a 12×9 image straddles the hull.
        let lut = CalibrationLut::new(vec![
            CalibrationVector { line: 1.0, points: vec![CalibrationPoint { pixel: 2.0, gain: g00 }, CalibrationPoint { pixel: 10.0, gain: g01 }] },
            CalibrationVector { line: 7.0, points: vec![CalibrationPoint { pixel: 2.0, gain: g10 }, CalibrationPoint { pixel: 10.0, gain: g11 }] },
        ]).unwrap();
        let img = Raster::filled(grid(12, 9), dn as f32).unwrap();
        let out = calibrate_sigma0(&img, &lut).unwrap();
        for row in 0..9 {
            for col in 0..12 {
                let s = ((col as f64).clamp(2.0, 10.0) - 2.0) / 8.0;
                let t = ((row as f64).clamp(1.0, 7.0) - 1.0) / 6.0;
                let a = (1.0 - t) * ((1.0 - s) * g00 + s * g01) + t * ((1.0 - s) * g10 + s * g11);
                let want = (dn as f64).powi(2) / (a * a);
                let got = out.get(col, row) as f64;
                prop_assert!((got - want).abs() <= 1e-6 * want, "({}, {}): {} vs {}", col, row, got, want);
            }
        }
    }
}

#[test]
fn homogeneous_speckle_cv_drops() {
    let input = speckle_raster(grid(128, 128), 0.1, 1, 21);
    let out = lee_sigma_filter(&input, &SpeckleFilterParams::default()).unwrap();
    let cv = |r: &Raster| {
        let v: Vec<f64> = r.values().iter().map(|&x| x as f64).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt() / m
    };
    assert!(cv(&out) < cv(&input));
    assert!(cv(&out) < 0.45);
}
