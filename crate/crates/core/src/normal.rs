//! Standard normal density, distribution and quantile functions.

use statrs::distribution::{ContinuousCDF, Normal};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
    }
}

/// Quantile function. `p` is clamped away from 0 and 1 so the result is finite.
pub fn quantile(p: f64) -> f64 {
    let p = p.clamp(1e-16, 1.0 - 1e-16);
    let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p);
    // One Newton step against the accurate cdf.
    let d = pdf(z);
    if d > 0.0 {
        z - (cdf(z) - p) / d
    } else {
        z
    }
}

/// `z Φ(z) + φ(z)`, the expected positive part of `Z + z`.
#[inline]
pub fn expected_positive_part(z: f64) -> f64 {
    (z * cdf(z) + pdf(z)).max(0.0)
}
