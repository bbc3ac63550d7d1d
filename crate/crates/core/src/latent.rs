//! Per-observation updates of `q(z_i)`.
//!
//! Probit, tobit and STAR sites are truncated normals in closed form. PLN
//! sites are Gaussian with `(m_i, s_i)` found by maximizing the site's ELBO
//! contribution with safeguarded coordinate-wise Newton steps.

use crate::data::Family;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{ln_gamma, LN_2PI};
use crate::truncnorm::{trunc_norm_moments, TruncNormMoments};

/// Updated site: moments plus the pieces the ELBO and VBC need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteMoments<T> {
    pub m: T,
    pub s: T,
    /// Entropy of `q(z_i)`; zero for observed tobit sites.
    pub entropy: T,
    /// `ln q(z_i)` at `z_i = m_i`; zero for observed tobit sites.
    pub log_q_at_mean: T,
}

impl<T: Real> SiteMoments<T> {
    fn observed(y: T) -> Self {
        Self { m: y, s: T::zero(), entropy: T::zero(), log_q_at_mean: T::zero() }
    }
}

impl<T: Copy> From<TruncNormMoments<T>> for SiteMoments<T> {
    fn from(t: TruncNormMoments<T>) -> Self {
        Self { m: t.mean, s: t.variance, entropy: t.entropy, log_q_at_mean: t.log_density_at_mean }
    }
}

/// `q(z_i)` for a binary outcome: `N(mu, 1)` truncated to the half-line `y` selects.
pub fn update_z_probit<T: Real>(mu: T, y: T) -> SiteMoments<T> {
    let (lo, hi) = if y > T::lit(0.5) {
        (T::zero(), T::infinity())
    } else {
        (T::neg_infinity(), T::zero())
    };
    trunc_norm_moments(mu, T::one(), lo, hi).expect("unit variance, ordered bounds").into()
}

/// `q(z_i)` for a censored outcome: uncensored sites are observed exactly.
pub fn update_z_tobit<T: Real>(mu: T, xi: T, y: T, y_lower: T) -> Result<SiteMoments<T>> {
    if y > y_lower {
        Ok(SiteMoments::observed(y))
    } else if y == y_lower {
        Ok(trunc_norm_moments(mu, xi, T::neg_infinity(), y_lower)?.into())
    } else {
        Err(Error::Data(format!("tobit outcome {y} lies below the censoring bound {y_lower}")))
    }
}

/// `q(z_i)` for a rounded count: `(−∞, 0)` for zeros, `[ln y, ln(y+1))` otherwise.
pub fn update_z_star<T: Real>(mu: T, xi: T, y: T) -> Result<SiteMoments<T>> {
    let (lo, hi) = star_interval(y.f64());
    Ok(trunc_norm_moments(mu, xi, T::lit(lo), T::lit(hi))?.into())
}

/// Latent interval a STAR count maps back to.
pub fn star_interval(y: f64) -> (f64, f64) {
    if y < 1.0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        let lo = y.ln();
        (lo, lo + (1.0 / y).ln_1p())
    }
}

/// Solver limits for PLN sites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlnConfig {
    /// Target for both `|∂/∂m|` and `|∂/∂s|`.
    pub grad_tol: f64,
    /// Maximum number of (m, log s) Newton sweeps.
    pub max_sweeps: usize,
}

impl Default for PlnConfig {
    fn default() -> Self {
        Self { grad_tol: 1e-10, max_sweeps: 50 }
    }
}

/// Variational parameters of a PLN site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlnSiteParams {
    pub m: f64,
    pub s: f64,
    pub converged: bool,
    pub newton_iters: usize,
}

impl PlnSiteParams {
    /// Starting point centred at `ln(y + 0.5)` with unit variance.
    pub fn initial(y: f64) -> Self {
        Self { m: (y + 0.5).ln(), s: 1.0, converged: false, newton_iters: 0 }
    }
}

/// Site objective `y·m − e^{m+s/2} − (τ/2)(m−η)² − sτ/2 + ½ ln s`, up to constants.
pub fn pln_site_objective(y: f64, eta: f64, tau: f64, m: f64, s: f64) -> f64 {
    let d = m - eta;
    y * m - (m + 0.5 * s).exp() - 0.5 * tau * d * d - 0.5 * s * tau + 0.5 * s.ln()
}

/// `(∂/∂m, ∂/∂s)` of [`pln_site_objective`].
pub fn pln_site_gradient(y: f64, eta: f64, tau: f64, m: f64, s: f64) -> (f64, f64) {
    let e = (m + 0.5 * s).exp();
    (y - e - tau * (m - eta), -0.5 * e - 0.5 * tau + 0.5 / s)
}

/// Maximizes the PLN site objective from `init`.
///
/// Alternates one Newton step in `m` and one in `v = ln s`; each objective is
/// concave in its coordinate and steps are halved until the objective does
/// not decrease.
pub fn update_z_pln(y: f64, eta: f64, tau: f64, init: PlnSiteParams, config: &PlnConfig) -> PlnSiteParams {
    let f = |m: f64, s: f64| pln_site_objective(y, eta, tau, m, s);
    let mut m = if init.m.is_finite() { init.m } else { (y + 0.5).ln() };
    let mut s = if init.s > 0.0 && init.s.is_finite() { init.s } else { 1.0 };
    let mut current = f(m, s);
    for sweep in 0..config.max_sweeps {
        let (gm, gs) = pln_site_gradient(y, eta, tau, m, s);
        let scale = 1.0 + y.abs() + tau * (m - eta).abs();
        let floor = config.grad_tol.max(8.0 * f64::EPSILON * scale);
        if gm.abs() < floor && gs.abs() < floor.max(8.0 * f64::EPSILON / s) {
            return PlnSiteParams { m, s, converged: true, newton_iters: sweep };
        }

        // m-step: ∂²/∂m² = −e^{m+s/2} − τ
        let e = (m + 0.5 * s).exp();
        let step = gm / (e + tau);
        let (nm, nf) = halve(|mm| f(mm, s), m, step, current);
        m = nm;
        current = nf;

        // v-step on v = ln s: ∂/∂v = s·g_s, ∂²/∂v² = −s e/2 − sτ/2 − s² e/4
        let e = (m + 0.5 * s).exp();
        let gv = s * (-0.5 * e - 0.5 * tau + 0.5 / s);
        let hv = s * (0.5 * e + 0.5 * tau) + 0.25 * s * s * e;
        let v = s.ln();
        let (nv, nf) = halve(|vv| f(m, vv.exp()), v, gv / hv, current);
        s = nv.exp();
        current = nf;
    }
    let (gm, gs) = pln_site_gradient(y, eta, tau, m, s);
    let converged = gm.abs() < config.grad_tol && gs.abs() < config.grad_tol;
    PlnSiteParams { m, s, converged, newton_iters: config.max_sweeps }
}

// Newton step `x + step`, halved until the objective does not decrease.
fn halve(f: impl Fn(f64) -> f64, x: f64, mut step: f64, current: f64) -> (f64, f64) {
    let slack = 4.0 * f64::EPSILON * current.abs();
    for _ in 0..64 {
        let cand = x + step;
        let val = f(cand);
        if val >= current - slack {
            return (cand, val);
        }
        step *= 0.5;
    }
    (x, current)
}

/// PLN site moments in the common site form.
pub fn pln_site_moments<T: Real>(p: &PlnSiteParams) -> SiteMoments<T> {
    let ln_s = p.s.ln();
    SiteMoments {
        m: T::lit(p.m),
        s: T::lit(p.s),
        entropy: T::lit(0.5 * (LN_2PI + 1.0 + ln_s)),
        log_q_at_mean: T::lit(-0.5 * (LN_2PI + ln_s)),
    }
}

/// `E_q[ln p(y_i | z_i)]`: zero for deterministic links; for PLN
/// `y m − e^{m + s/2} − ln y!`.
pub fn expected_loglik(family: Family, y: f64, m: f64, s: f64) -> f64 {
    match family {
        Family::Pln => y * m - (m + 0.5 * s).exp() - ln_gamma(y + 1.0),
        _ => 0.0,
    }
}

/// `ln p(y_i | z_i = m)`: zero for deterministic links (m lies in the support);
/// the Poisson log-pmf at rate `e^m` for PLN.
pub fn loglik_at(family: Family, y: f64, m: f64) -> f64 {
    expected_loglik(family, y, m, 0.0)
}
