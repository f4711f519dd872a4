//! Sigma range of the L-look intensity speckle model.
//!
//! Speckle `v` follows Gamma(shape L, mean 1), whose CDF is the regularized
//! lower incomplete gamma function `P(L, L·v)`. The range `[A1, A2]` holds
//! the central `σ` probability mass with equal tails. Truncated moments use
//! the identities `v·f_L(v) = f_{L+1}(v)` and `v²·f_L(v) = (L+1)/L·f_{L+2}(v)`
//! (all densities with rate L).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use super::SarError;

/// Tolerance on the CDF at the returned quantiles.
const CDF_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRangeParams {
    pub looks: u32,
    pub sigma: f64,
    /// Lower range multiplier.
    pub a1: f64,
    /// Upper range multiplier.
    pub a2: f64,
    /// Coefficient of variation of speckle truncated to `[a1, a2]`.
    pub sigma_vn: f64,
}

impl SigmaRangeParams {
    pub fn validate(&self) -> Result<(), SarError> {
        let ok = self.looks >= 1
            && 0.0 < self.a1
            && self.a1 < 1.0
            && 1.0 < self.a2
            && self.sigma_vn > 0.0
            && self.sigma_vn < 1.0 / (self.looks as f64).sqrt();
        if ok {
            Ok(())
        } else {
            Err(SarError::InvalidParams(format!("inconsistent sigma range {self:?}")))
        }
    }
}

fn cdf(looks: f64, v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        gamma_lr(looks, looks * v)
    }
}

fn quantile(looks: f64, p: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while cdf(looks, hi) < p {
        hi *= 2.0;
    }
    // Bisection to machine resolution; the CDF is monotone so this always
    // lands within CDF_TOL for the targets we use.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(looks, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (cdf(looks, lo), cdf(looks, hi));
    let best = if (flo - p).abs() <= (fhi - p).abs() { lo } else { hi };
    debug_assert!((cdf(looks, best) - p).abs() <= CDF_TOL, "quantile {p} for L={looks}");
    best
}

/// Derive the sigma-range multipliers and truncated speckle deviation for
/// `looks` looks and coverage `sigma`.
pub fn compute_sigma_range(looks: u32, sigma: f64) -> Result<SigmaRangeParams, SarError> {
    if looks == 0 {
        return Err(SarError::InvalidLooks);
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(SarError::SigmaOutOfRange(sigma));
    }
    let l = looks as f64;
    let tail = (1.0 - sigma) / 2.0;
    let a1 = quantile(l, tail);
    let a2 = quantile(l, 1.0 - tail);

    let mass = cdf(l, a2) - cdf(l, a1);
    let m1 = gamma_lr(l + 1.0, l * a2) - gamma_lr(l + 1.0, l * a1);
    let m2 = (l + 1.0) / l * (gamma_lr(l + 2.0, l * a2) - gamma_lr(l + 2.0, l * a1));
    let mean = m1 / mass;
    let var = m2 / mass - mean * mean;
    let params = SigmaRangeParams { looks, sigma, a1, a2, sigma_vn: var.max(0.0).sqrt() / mean };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_look_closed_form() {
        let p = compute_sigma_range(1, 0.9).unwrap();
        assert!((p.a1 - (-(0.95f64).ln())).abs() < 1e-9, "{}", p.a1);
        assert!((p.a2 - (-(0.05f64).ln())).abs() < 1e-9, "{}", p.a2);
        assert!(p.sigma_vn < 1.0);
    }

    #[test]
    fn untruncated_limit() {
        let p = compute_sigma_range(1, 1.0 - 1e-9).unwrap();
        assert!(p.a1 < 1e-9);
        assert!(p.a2 > 20.0);
        assert!((p.sigma_vn - 1.0).abs() < 1e-3, "{}", p.sigma_vn);
    }

    #[test]
    fn monotone_in_sigma() {
        for looks in [1, 2, 4, 16] {
            let mut prev: Option<SigmaRangeParams> = None;
            for s in [0.5, 0.6, 0.7, 0.8, 0.9, 0.95] {
                let p = compute_sigma_range(looks, s).unwrap();
                assert!(p.sigma_vn < 1.0 / (looks as f64).sqrt());
                if let Some(q) = prev {
                    assert!(p.a1 < q.a1 && p.a2 > q.a2);
                }
                prev = Some(p);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert_eq!(compute_sigma_range(1, 1.0), Err(SarError::SigmaOutOfRange(1.0)));
        assert_eq!(compute_sigma_range(1, 0.0), Err(SarError::SigmaOutOfRange(0.0)));
        assert_eq!(compute_sigma_range(0, 0.9), Err(SarError::InvalidLooks));
    }
}
