//! Production-versus-oracle comparisons shared by the integration tests and
//! the acceptance target.

use latent_bma::latent::{pln_site_gradient, update_z_pln, PlnConfig, PlnSiteParams};
use latent_bma::truncnorm::trunc_norm_moments;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{oracle_pln_site, oracle_trunc_moments, pln_objective, rel_err, trunc_grid};

/// Worst relative errors of (mean, variance, log-mass) over the grid, and
/// whether every production output was finite.
pub struct TruncGridReport {
    pub worst: (f64, f64, f64),
    pub all_finite: bool,
    pub cases: usize,
}

pub fn trunc_grid_check() -> TruncGridReport {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut all_finite = true;
    let grid = trunc_grid();
    for &(mu, var, lo, hi) in &grid {
        let m = match trunc_norm_moments(mu, var, lo, hi) {
            Ok(m) => m,
            Err(_) => {
                all_finite = false;
                continue;
            }
        };
        all_finite &= [m.mean, m.variance, m.log_mass, m.entropy, m.log_density_at_mean].iter().all(|v| v.is_finite());
        let (mean, v, lm) = oracle_trunc_moments(mu, var, lo, hi).expect("oracle quadrature converges on the grid");
        worst.0 = worst.0.max(rel_err(m.mean, mean, var.sqrt()));
        worst.1 = worst.1.max(rel_err(m.variance, v, 0.0));
        worst.2 = worst.2.max(rel_err(m.log_mass, lm, 1.0));
    }
    TruncGridReport { worst, all_finite, cases: grid.len() }
}

/// Random `(y, η, τ, m, s)` with `y ≤ 10^4` spread log-uniformly.
/// `s` stays above 0.05 so that the `h = 1e-5` difference quotient of the
/// `½ ln s` term is itself accurate to better than `1e-6`.
pub fn random_site(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64, f64) {
    let y = (10f64.powf(rng.random_range(0.0..4.0)) - 1.0).round();
    let eta = rng.random_range(-3.0..3.0) + (y + 0.5).ln() * rng.random_range(0.0..1.0);
    let tau = 10f64.powf(rng.random_range(-1.0..1.5));
    let m = (y + 0.5).ln() + rng.random_range(-1.0..1.0);
    let s = 10f64.powf(rng.random_range(-1.3..0.5));
    (y, eta, tau, m, s)
}

/// Worst relative gap between analytic site gradients and central
/// differences over `points` random sites.
pub fn pln_gradient_check(seed: u64, points: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let (y, eta, tau, m, s) = random_site(&mut rng);
        let (gm, gs) = pln_site_gradient(y, eta, tau, m, s);
        let fm = (pln_objective(y, eta, tau, m + h, s) - pln_objective(y, eta, tau, m - h, s)) / (2.0 * h);
        let fs = (pln_objective(y, eta, tau, m, s + h) - pln_objective(y, eta, tau, m, s - h)) / (2.0 * h);
        let e = ((gm - fm).abs() / gm.abs().max(1.0)).max((gs - fs).abs() / gs.abs().max(1.0));
        worst = worst.max(e);
    }
    worst
}

/// Worst per-coordinate gap `(|Δm|, |Δs|)` between the Newton solver and
/// the grid oracle, and whether every solve reported convergence.
pub fn pln_newton_check(seed: u64, points: usize) -> ((f64, f64), bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PlnConfig::default();
    let mut worst = (0.0f64, 0.0f64);
    let mut all_converged = true;
    for _ in 0..points {
        let (y, eta, tau, _, _) = random_site(&mut rng);
        let got = update_z_pln(y, eta, tau, PlnSiteParams::initial(y), &cfg);
        let (om, os) = oracle_pln_site(y, eta, tau);
        all_converged &= got.converged;
        worst = (worst.0.max((got.m - om).abs()), worst.1.max((got.s - os).abs()));
    }
    (worst, all_converged)
}
