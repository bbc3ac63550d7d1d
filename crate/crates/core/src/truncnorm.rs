//! Moments, normalizing mass and entropy of truncated normal distributions.
//!
//! Everything is computed on the standardized scale `Z = (X − μ)/σ` with
//! bounds `ℓ < u`. Intervals are reflected so that `ℓ + u ≥ 0`, which puts
//! the mass on the upper side and lets tail regions be handled through
//! exponentially scaled survival functions. Narrow finite intervals, where
//! `E[Z²] − E[Z]²` would cancel catastrophically, are integrated directly by
//! Gauss–Legendre quadrature in a coordinate anchored at the lower bound.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{gauss_legendre, hazard_excess, norm_cdf, norm_pdf, norm_sf, norm_sf_scaled, INV_SQRT_2PI, LN_2PI};

// finite intervals narrower than this (standardized) use quadrature
const NARROW_WIDTH: f64 = 1.0;

/// Moments of `N(μ, σ²)` restricted to `(lower, upper)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncNormMoments<T> {
    pub mean: T,
    pub variance: T,
    /// `ln[Φ(u) − Φ(ℓ)]`.
    pub log_mass: T,
    pub entropy: T,
    /// Log-density of the truncated distribution evaluated at its mean.
    pub log_density_at_mean: T,
}

/// Standardized moments: `E[Z]`, `Var[Z]`, `ln κ`.
#[derive(Clone, Copy, Debug)]
struct Standard {
    lambda: f64,
    chi: f64,
    log_kappa: f64,
}

/// Truncated-normal moments for parent `N(mu, var)` and bounds that may be
/// infinite.
pub fn trunc_norm_moments<T: Real>(mu: T, var: T, lower: T, upper: T) -> Result<TruncNormMoments<T>> {
    let (mu, var, lower, upper) = (mu.f64(), var.f64(), lower.f64(), upper.f64());
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Parameter(format!("truncated normal variance must be positive, got {var}")));
    }
    if !mu.is_finite() {
        return Err(Error::numerical("truncated normal location"));
    }
    if !(lower < upper) {
        return Err(Error::Parameter(format!("truncation bounds must satisfy lower < upper, got [{lower}, {upper}]")));
    }
    let sd = var.sqrt();
    let a = (lower - mu) / sd;
    let b = (upper - mu) / sd;
    let st = standardized(a, b);
    let second = st.chi + st.lambda * st.lambda;
    let half_ln_var = 0.5 * var.ln();
    let entropy = 0.5 * LN_2PI + st.log_kappa + 0.5 * second + half_ln_var;
    let log_density_at_mean = -0.5 * LN_2PI - half_ln_var - 0.5 * st.lambda * st.lambda - st.log_kappa;
    Ok(TruncNormMoments {
        mean: T::lit(mu + sd * st.lambda),
        variance: T::lit(var * st.chi),
        log_mass: T::lit(st.log_kappa),
        entropy: T::lit(entropy),
        log_density_at_mean: T::lit(log_density_at_mean),
    })
}

fn standardized(a: f64, b: f64) -> Standard {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return Standard { lambda: 0.0, chi: 1.0, log_kappa: 0.0 };
    }
    if a + b < 0.0 {
        let s = standardized_upper(-b, -a);
        return Standard { lambda: -s.lambda, ..s };
    }
    standardized_upper(a, b)
}

// Requires a + b ≥ 0, so `a` is finite.
fn standardized_upper(a: f64, b: f64) -> Standard {
    let w = b - a;
    let s = if b.is_finite() && w <= NARROW_WIDTH {
        narrow(a, w)
    } else if a >= 0.0 {
        upper_tail(a, b)
    } else {
        straddle(a, b)
    };
    Standard { chi: s.chi.clamp(0.0, 1.0), ..s }
}

/// `a ≥ 0`, interval wide or unbounded above. With `S(x) = Q(x)e^{x²/2}`,
/// `κ = e^{−a²/2}[S(a) − r S(b)]` where `r = e^{−(b²−a²)/2}`.
fn upper_tail(a: f64, b: f64) -> Standard {
    let sa = norm_sf_scaled(a);
    let da = hazard_excess(a);
    let (kappa_s, excess_num, boundary) = if b.is_finite() {
        let w = b - a;
        let r = (-0.5 * w * (a + b)).exp();
        let sb = norm_sf_scaled(b);
        let kappa_s = sa - r * sb;
        (kappa_s, sa * da - r * sb * (hazard_excess(b) + w), INV_SQRT_2PI * r * w / kappa_s)
    } else {
        (sa, sa * da, 0.0)
    };
    let excess = excess_num / kappa_s;
    let lambda = a + excess;
    let chi = 1.0 - lambda * excess - boundary;
    Standard { lambda, chi, log_kappa: -0.5 * a * a + kappa_s.ln() }
}

/// `a < 0 < b`, width above the quadrature threshold: no cancellation in κ.
fn straddle(a: f64, b: f64) -> Standard {
    let kappa = 1.0 - norm_sf(b) - norm_cdf(a);
    let (pa, pb) = (norm_pdf(a), norm_pdf(b));
    let bpb = if b.is_finite() { b * pb } else { 0.0 };
    let lambda = (pa - pb) / kappa;
    let second = 1.0 + (a * pa - bpb) / kappa;
    Standard { lambda, chi: second - lambda * lambda, log_kappa: kappa.ln() }
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn rule(order: usize) -> &'static Rule {
    static RULES: OnceLock<[Rule; 3]> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        [8, 16, 32].map(|k| {
            let (nodes, weights) = gauss_legendre(k);
            Rule { nodes, weights }
        })
    });
    match order {
        8 => &rules[0],
        16 => &rules[1],
        _ => &rules[2],
    }
}

/// Finite interval `[a, a + w]` with `w ≤ 1` and `a ≥ −w/2`; integrates the
/// kernel `e^{−at − t²/2}` over `t ∈ [0, w]`.
fn narrow(a: f64, w: f64) -> Standard {
    let span = (a * w + 0.5 * w * w).abs();
    let order = if span <= 1.0 {
        8
    } else if span <= 6.0 {
        16
    } else {
        32
    };
    let Rule { nodes, weights } = rule(order);
    let half = 0.5 * w;
    let mut t = [0.0f64; 32];
    let mut f = [0.0f64; 32];
    let mut mass = 0.0;
    let mut first = 0.0;
    for k in 0..order {
        let tk = half * (1.0 + nodes[k]);
        let fk = weights[k] * (-tk * (a + 0.5 * tk)).exp();
        t[k] = tk;
        f[k] = fk;
        mass += fk;
        first += fk * tk;
    }
    let mean_t = first / mass;
    let mut second = 0.0;
    for k in 0..order {
        let d = t[k] - mean_t;
        second += f[k] * d * d;
    }
    let log_kappa = -0.5 * a * a - 0.5 * LN_2PI + (mass * half).ln();
    Standard { lambda: a + mean_t, chi: second / mass, log_kappa }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn moments(mu: f64, var: f64, lo: f64, hi: f64) -> TruncNormMoments<f64> {
        trunc_norm_moments(mu, var, lo, hi).unwrap()
    }

    #[test]
    fn half_normal() {
        let m = moments(0.0, 1.0, 0.0, f64::INFINITY);
        assert!((m.mean - (2.0 / PI).sqrt()).abs() < 1e-15);
        assert!((m.variance - (1.0 - 2.0 / PI)).abs() < 1e-15);
        assert!((m.log_mass - 0.5f64.ln()).abs() < 1e-15);
        // entropy of the half-normal: ½ ln(πe/2)
        assert!((m.entropy - 0.5 * (PI * std::f64::consts::E / 2.0).ln()).abs() < 1e-14);
        let lower = moments(0.0, 1.0, f64::NEG_INFINITY, 0.0);
        assert_eq!(lower.mean, -m.mean);
        assert_eq!(lower.variance, m.variance);
    }

    #[test]
    fn untruncated() {
        let m = moments(3.0, 4.0, f64::NEG_INFINITY, f64::INFINITY);
        assert_eq!((m.mean, m.variance, m.log_mass), (3.0, 4.0, 0.0));
        assert!((m.entropy - 0.5 * (2.0 * PI * std::f64::consts::E * 4.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(trunc_norm_moments(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(trunc_norm_moments(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(trunc_norm_moments(0.0, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn uniform_limit_of_narrow_interval() {
        let m = moments(0.0, 1.0, 1.0, 1.001);
        assert!((m.mean - 1.0005).abs() < 1e-6);
        let w: f64 = 0.001;
        assert!((m.variance - w * w / 12.0).abs() < 1e-12);
        assert!(m.mean > 1.0 && m.mean < 1.001);
    }

    #[test]
    fn regimes_agree_at_their_boundaries() {
        // width exactly at the quadrature threshold versus just above it
        for a in [-0.4, 0.0, 0.7, 3.0, 7.5] {
            let q = standardized(a, a + NARROW_WIDTH);
            let c = standardized(a, a + NARROW_WIDTH + 1e-12);
            assert!((q.lambda - c.lambda).abs() < 1e-11 * (1.0 + a.abs()), "a={a}");
            assert!((q.chi - c.chi).abs() < 1e-11, "a={a}: {} vs {}", q.chi, c.chi);
            assert!((q.log_kappa - c.log_kappa).abs() < 1e-11);
        }
    }

    #[test]
    fn deep_tails_stay_finite() {
        for mu in [-40.0, -8.0, 8.0, 40.0] {
            for (lo, hi) in [(0.0, f64::INFINITY), (f64::NEG_INFINITY, 0.0), (0.0, 0.5), (2.0, 9.0)] {
                let m = moments(mu, 1.0, lo, hi);
                assert!(m.mean.is_finite() && m.variance.is_finite() && m.log_mass.is_finite() && m.entropy.is_finite());
                assert!(m.mean > lo && m.mean < hi, "mu={mu} [{lo},{hi}] mean={}", m.mean);
                assert!(m.variance > 0.0 && m.variance <= 1.0, "mu={mu} [{lo},{hi}] var={}", m.variance);
            }
        }
    }

    #[test]
    fn probit_reflection_is_exact() {
        for mu in [-7.3, -1.2, 0.0, 0.4, 5.9] {
            let up = moments(mu, 1.0, 0.0, f64::INFINITY);
            let down = moments(-mu, 1.0, f64::NEG_INFINITY, 0.0);
            assert_eq!(up.mean, -down.mean);
        }
    }

    #[test]
    fn generic_over_f32() {
        let m = trunc_norm_moments(0.0f32, 1.0, 0.0, f32::INFINITY).unwrap();
        assert!((m.mean - (2.0f32 / std::f32::consts::PI).sqrt()).abs() < 1e-6);
    }
}
