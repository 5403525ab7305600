//! Standard normal primitives.
//!
//! The cdf is evaluated through `erfc`, which keeps relative accuracy in
//! both tails; `1 - Φ(x)` is always computed as `Φ(-x)` rather than by
//! subtraction.

use libm::{erf, erfc};
use statrs::function::erf::erfc_inv;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(x).
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cdf Φ(x).
pub fn cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail 1 − Φ(x).
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Inverse cdf Φ⁻¹(p). Returns ±∞ at the endpoints and NaN outside [0, 1].
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // Halley refinement against the erfc-based cdf
    for _ in 0..2 {
        let e = if x < 0.0 {
            (cdf(x) - p) / pdf(x)
        } else {
            ((1.0 - p) - sf(x)) / pdf(x)
        };
        if !e.is_finite() {
            break;
        }
        x -= e / (1.0 + 0.5 * x * e);
    }
    x
}

/// Inverse Mills ratio φ(u)/Φ(u), stable for very negative `u`.
pub fn inv_mills(u: f64) -> f64 {
    if u > -30.0 {
        return pdf(u) / cdf(u);
    }
    // continued fraction for Φ(-x)/φ(x) with x = -u > 0
    let x = -u;
    let mut frac = 0.0;
    for k in (1..=60).rev() {
        frac = k as f64 / (x + frac);
    }
    x + frac
}

/// Cdf of the χ² distribution with one degree of freedom.
pub fn chi2_1_cdf(w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    erf((w / 2.0).sqrt())
}

/// Two-sided critical value z such that P(|Z| ≤ z) = level.
pub fn two_sided_z(level: f64) -> f64 {
    quantile(0.5 + level / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Φ by Simpson quadrature of the density from 0, an independent route.
    fn cdf_by_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let mut s = pdf(0.0) + pdf(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    #[test]
    fn cdf_matches_quadrature() {
        for &x in &[-3.0, -1.2, -0.3, 0.0, 0.7, 1.5, 2.9] {
            let q = cdf_by_quadrature(x);
            assert!((cdf(x) - q).abs() < 1e-13, "x={x}: {} vs {q}", cdf(x));
        }
    }

    #[test]
    fn tail_values_keep_relative_accuracy() {
        // Φ(-10) = 7.619853024160527e-24
        let v = cdf(-10.0);
        assert!(((v - 7.619_853_024_160_527e-24) / v).abs() < 1e-13);
        // Φ(-20) = 2.753624118606233e-89
        let v = cdf(-20.0);
        assert!(((v - 2.753_624_118_606_233e-89) / v).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.999, 1.0 - 1e-9] {
            let x = quantile(p);
            let back = cdf(x);
            assert!(((back - p) / p.min(1.0 - p)).abs() < 1e-9, "p={p}");
        }
        assert_eq!(quantile(0.5), 0.0);
        assert!(quantile(1.5).is_nan());
    }

    #[test]
    fn inv_mills_is_continuous_across_switch() {
        let a = inv_mills(-30.0 + 1e-9);
        let b = inv_mills(-30.0 - 1e-9);
        assert!((a - b).abs() / a < 1e-8);
        // asymptotically λ(u) ≈ -u
        let l = inv_mills(-200.0);
        assert!((l - 200.0).abs() < 0.01);
    }

    #[test]
    fn chi2_one_dof_reference() {
        // P(χ²₁ ≤ 3.841458820694124) = 0.95
        assert!((chi2_1_cdf(3.841_458_820_694_124) - 0.95).abs() < 1e-12);
        assert!((two_sided_z(0.9) - 1.644_853_626_951_472_2).abs() < 1e-12);
    }
}
