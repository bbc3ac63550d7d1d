//! Special functions evaluated in double precision.
//!
//! `erfc` and `ln_gamma` come from `libm`, `digamma` from `statrs`; the scaled
//! complementary error function and the Gaussian tail helpers built on it
//! live here because the truncated-normal toolkit needs them accurate far
//! into the tails.

use std::f64::consts::{PI, SQRT_2};

/// 1/sqrt(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

// Above this argument erfcx switches from exp(x²)·erfc(x) to a continued fraction.
const ERFCX_CF_SWITCH: f64 = 5.0;

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        // reflection; overflows to +inf for very negative x, which is the true limit
        let e = (x * x).exp();
        return 2.0 * e - erfcx(-x);
    }
    if x < ERFCX_CF_SWITCH {
        return (x * x).exp() * erfc(x);
    }
    if x > 1e8 {
        return INV_SQRT_PI / x;
    }
    // erfcx(x) = 1/√π · 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))
    let terms = if x < 8.0 { 60 } else if x < 20.0 { 30 } else { 12 };
    let mut t = x;
    for k in (1..=terms).rev() {
        t = x + 0.5 * k as f64 / t;
    }
    INV_SQRT_PI / t
}

/// `φ(x)/Q(x) − x` for `x ≥ 0`: how far the mean of a normal truncated to
/// `[x, ∞)` lies above `x`.
pub fn hazard_excess(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < ERFCX_CF_SWITCH {
        return INV_SQRT_2PI / norm_sf_scaled(x) - x;
    }
    // φ(x)/Q(x) = √2·t(x/√2) with t the erfcx continued fraction; t − y = (1/2)/t₁
    let y = x / SQRT_2;
    let terms = if y < 8.0 { 60 } else if y < 20.0 { 30 } else { 12 };
    let mut t = y;
    for k in (2..=terms).rev() {
        t = y + 0.5 * k as f64 / t;
    }
    SQRT_2 * 0.5 / t
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Upper tail `Q(x) = 1 − Φ(x)`.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `Q(x)·exp(x²/2)`, finite for all `x ≥ 0` including `+inf` (→ 0).
#[inline]
pub fn norm_sf_scaled(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    0.5 * erfcx(x / SQRT_2)
}

/// `ln Φ(x)`, accurate in the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x < -5.0 {
        (0.5 * erfcx(-x / SQRT_2)).ln() - 0.5 * x * x
    } else {
        norm_cdf(x).ln_1p_safe()
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`.
pub fn inv_mills(x: f64) -> f64 {
    if x < -5.0 {
        INV_SQRT_2PI / (0.5 * erfcx(-x / SQRT_2))
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

trait LnSafe {
    fn ln_1p_safe(self) -> f64;
}

impl LnSafe for f64 {
    // ln(p) with ln_1p for p close to one
    #[inline]
    fn ln_1p_safe(self) -> f64 {
        if self > 0.5 {
            (self - 1.0).ln_1p()
        } else {
            self.ln()
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let m = order.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..order {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = order as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[order - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}
