//! Brute-force reference implementations used only by tests.
//!
//! Nothing here calls into the library's numeric kernels.

#![allow(dead_code)]

pub mod checks;
pub mod sims;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_41,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-300, rel_tol: 1e-12, max_depth: 50 }
    }
}

// (integral, error estimate, integral of |f|)
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let x = h * XGK[j];
        let (f1, f2) = (f(c - x), f(c + x));
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

/// Adaptive Gauss–Kronrod (7/15) integral of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, spec: QuadratureSpec) -> Result<f64, String> {
    let (whole, _, _) = gk15(f, a, b);
    let tol = spec.abs_tol.max(spec.rel_tol * whole.abs());
    let mut stack = vec![(a, b, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err, abs) = gk15(f, lo, hi);
        let share = tol * (hi - lo) / (b - a);
        // second test: the estimate is at the roundoff level of the panel
        if err <= share.max(1e-300) || err <= 50.0 * f64::EPSILON * abs {
            total += val;
        } else if depth >= spec.max_depth {
            return Err(format!("quadrature did not converge on [{lo}, {hi}]"));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}

/// `(mean, variance, log_mass)` of `N(mu, var)` truncated to `(lower, upper)`
/// by direct numerical integration of the parent density.
pub fn oracle_trunc_moments(mu: f64, var: f64, lower: f64, upper: f64) -> Result<(f64, f64, f64), String> {
    let sd = var.sqrt();
    let span = 40.0 * sd;
    let lo = if lower.is_finite() { lower } else { upper.min(mu) - span };
    let hi = if upper.is_finite() { upper } else { lower.max(mu) + span };
    // anchor at the point of the interval nearest the mode
    let anchor = mu.clamp(lo, hi);
    let q0 = (anchor - mu).powi(2) / (2.0 * var);
    let kernel = move |x: f64| (-(x - mu).powi(2) / (2.0 * var) + q0).exp();
    let spec = QuadratureSpec::default();
    // integrate in the shifted variable t = x − anchor to keep t small
    let pieces = |g: &dyn Fn(f64) -> f64| -> Result<f64, String> {
        let mut s = 0.0;
        if anchor > lo {
            s += integrate(&|t| g(t), lo - anchor, 0.0, spec)?;
        }
        if hi > anchor {
            s += integrate(&|t| g(t), 0.0, hi - anchor, spec)?;
        }
        Ok(s)
    };
    let mass = pieces(&|t| kernel(anchor + t))?;
    let first = pieces(&|t| t * kernel(anchor + t))? / mass;
    let second = pieces(&|t| (t - first).powi(2) * kernel(anchor + t))? / mass;
    let log_mass = mass.ln() - q0 - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
    Ok((anchor + first, second, log_mass))
}

/// PLN site objective `y·m − e^{m+s/2} − (τ/2)(m−η)² − sτ/2 + ½ ln s`.
pub fn pln_objective(y: f64, eta: f64, tau: f64, m: f64, s: f64) -> f64 {
    y * m - (m + 0.5 * s).exp() - 0.5 * tau * (m - eta).powi(2) - 0.5 * s * tau + 0.5 * s.ln()
}

/// Grid search over `(m, s)` followed by alternating golden-section refinement.
pub fn oracle_pln_site(y: f64, eta: f64, tau: f64) -> (f64, f64) {
    let centre = (y + 0.5).ln();
    let m_lo = (eta - 8.0).min(centre - 8.0);
    let m_hi = (eta + 8.0).max(centre + 8.0);
    let (s_lo, s_hi) = (1e-6f64, 8.0f64);
    let grid = 400;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=grid {
        let m = m_lo + (m_hi - m_lo) * i as f64 / grid as f64;
        for j in 0..=grid {
            // geometric spacing in s resolves the ½ ln s barrier
            let s = s_lo * (s_hi / s_lo).powf(j as f64 / grid as f64);
            let v = pln_objective(y, eta, tau, m, s);
            if v > best.0 {
                best = (v, m, s);
            }
        }
    }
    let (_, mut m, mut s) = best;
    let dm = (m_hi - m_lo) / grid as f64;
    let mut m_window = (m - dm, m + dm);
    let mut s_window = (s * (s_hi / s_lo).powf(-1.0 / grid as f64), s * (s_hi / s_lo).powf(1.0 / grid as f64));
    for _ in 0..60 {
        m = golden_max(|mm| pln_objective(y, eta, tau, mm, s), m_window.0, m_window.1);
        s = golden_max(|ss| pln_objective(y, eta, tau, m, ss), s_window.0.max(1e-300), s_window.1);
        // keep windows around the current point, but allow drift
        let hw_m = 0.5 * (m_window.1 - m_window.0);
        m_window = (m - hw_m, m + hw_m);
        let hw_s = 0.5 * (s_window.1 - s_window.0);
        s_window = ((s - hw_s).max(s * 1e-3), s + hw_s);
    }
    (m, s)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `XᵀX` by a triple loop over a row-major `n × p` matrix after centering.
pub fn naive_cross_products(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let p = rows[0].len();
    let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut g = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for r in rows {
                s += (r[i] - means[i]) * (r[j] - means[j]);
            }
            g[i * p + j] = s;
        }
    }
    g
}

/// Posterior inclusion probability of the single covariate when only the
/// null and the one-covariate model exist.
pub fn two_model_pip(log_post_null: f64, log_post_one: f64) -> f64 {
    1.0 / (1.0 + (log_post_null - log_post_one).exp())
}

/// Standard normal CDF via the complementary error function series/continued
/// fraction written out independently of the library.
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * erfc_ref(-x / std::f64::consts::SQRT_2)
}

fn erfc_ref(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_ref(-x);
    }
    if x < 2.0 {
        // erf Maclaurin series
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        for k in 1..200 {
            term *= -x2 / k as f64;
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // Lentz continued fraction for erfc
        let mut f;
        let tiny = 1e-300;
        let b0 = x;
        f = b0;
        let mut c = b0;
        let mut d = 0.0;
        for k in 1..500 {
            let a = k as f64 / 2.0;
            let b = x;
            d = b + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / (std::f64::consts::PI.sqrt() * f)
    }
}

/// `ln Φ(x)` for the probit likelihood oracle.
pub fn log_phi_cdf(x: f64) -> f64 {
    if x > -30.0 {
        phi_cdf(x).ln()
    } else {
        // asymptotic series of the Mills ratio
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    }
}

/// 500 `(mu, var, lower, upper)` cases: standardized lower bounds on a grid in
/// `[−8, 8]`, half-infinite intervals on either side, and finite intervals of
/// standardized width `1e-3`, `0.05` and `3`.
pub fn trunc_grid() -> Vec<(f64, f64, f64, f64)> {
    let parents: [(f64, f64); 4] = [(0.0, 1.0), (1.5, 0.25), (-2.0, 4.0), (0.3, 0.01)];
    let mut out = Vec::with_capacity(500);
    for &(mu, var) in &parents {
        let sd = var.sqrt();
        for k in 0..25 {
            let l = -8.0 + 16.0 * k as f64 / 24.0;
            let lo = mu + sd * l;
            out.push((mu, var, lo, f64::INFINITY));
            out.push((mu, var, f64::NEG_INFINITY, lo));
            for w in [1e-3, 0.05, 3.0] {
                out.push((mu, var, lo, lo + sd * w));
            }
        }
    }
    out
}

/// Scale-aware relative error: `|got − want| / max(|want|, floor)`.
pub fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}
