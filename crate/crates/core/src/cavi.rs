//! Coordinate-ascent variational inference for one model.
//!
//! A sweep first refreshes `q(α) q(β) q(σ²)` from the current latent moments
//! and then refreshes every `q(z_i)` from the new regression block, so the
//! returned `q(z)` is always the one implied by the returned θ. Everything
//! the θ-block and the ELBO need from the `n` latent sites is condensed into a
//! [`LatentSummary`] during the site pass.

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{submodel_chol, CrossProducts, Dataset, Family, Submodel};
use crate::error::{Error, Result};
use crate::latent::{
    expected_loglik, loglik_at, pln_site_moments, star_interval, update_z_pln, update_z_probit, update_z_star,
    update_z_tobit, PlnConfig, PlnSiteParams, SiteMoments,
};
use crate::linalg::{self, quad_form, Cholesky};
use crate::model_space::ModelIndex;
use crate::scalar::Real;

/// Settings shared by VB and AVB fits.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    /// g-prior scale; `None` means `g = n`.
    pub g: Option<f64>,
    /// Largest relative change of `(μ_α, μ_β, b/a)` accepted as converged.
    pub tol: f64,
    pub max_iter: usize,
    pub pln: PlnConfig,
    /// Record the ELBO after every sweep.
    pub track_elbo: bool,
    /// Diagonal shift added to `G_k` before factorization.
    pub ridge: f64,
    /// Site updates run data-parallel from this many observations on.
    pub parallel_min_n: usize,
    /// Extrapolate the θ fixed-point map between plain sweeps.
    pub accelerate: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            g: None,
            tol: 1e-6,
            max_iter: 10_000,
            pln: PlnConfig::default(),
            track_elbo: false,
            ridge: 0.0,
            parallel_min_n: 8192,
            accelerate: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.g {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Parameter(format!("g must be positive, got {g}")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Parameter("ridge must be non-negative".into()));
        }
        Ok(())
    }

    pub fn g_for(&self, n: usize) -> f64 {
        self.g.unwrap_or(n as f64)
    }
}

/// Latent means and variances `(m_i, s_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent<T> {
    pub m: Vec<T>,
    pub s: Vec<T>,
}

/// Sufficient statistics of the latent pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSummary<T> {
    pub n: usize,
    pub mean_m: T,
    /// `Σ (m_i − m̄)²`.
    pub centered_ss: T,
    /// `X_kᵀ m` for the model's columns.
    pub xt_m: Vec<T>,
    pub sum_s: T,
    pub sum_entropy: T,
    /// `Σ ln q(z_i = m_i)`.
    pub sum_log_q: T,
    /// `Σ E_q[ln p(y_i | z_i)]`.
    pub sum_expected_loglik: T,
    /// `Σ ln p(y_i | z_i = m_i)`.
    pub sum_loglik_at_mean: T,
}

impl<T: Real> LatentSummary<T> {
    /// Same latent pass, restricted to another column subset of a full `Xᵀm`.
    pub fn with_xt_m(&self, xt_m: Vec<T>) -> Self {
        Self { xt_m, ..self.clone() }
    }
}

/// Parameters of `q(α) q(β) q(σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta<T> {
    pub mu_alpha: T,
    pub omega_alpha: T,
    pub mu_beta: Vec<T>,
    /// `p_k × p_k`, row-major.
    pub omega_beta: Vec<T>,
    pub a: T,
    pub b: T,
}

impl<T: Real> Theta<T> {
    fn initial(k: usize) -> Self {
        Self {
            mu_alpha: T::zero(),
            omega_alpha: T::one(),
            mu_beta: vec![T::zero(); k],
            omega_beta: vec![T::zero(); k * k],
            a: T::one(),
            b: T::one(),
        }
    }

    /// `ξ = b/a`, the plug-in latent variance.
    pub fn xi(&self) -> T {
        self.b / self.a
    }

    fn monitored(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.mu_beta.len() + 2);
        v.push(self.mu_alpha);
        v.extend_from_slice(&self.mu_beta);
        v.push(self.xi());
        v
    }
}

/// Converged (or iteration-capped) variational fit of one model.
#[derive(Clone, Debug)]
pub struct VariationalState<T> {
    pub model: ModelIndex,
    pub family: Family,
    pub theta: Theta<T>,
    pub latent: Arc<Latent<T>>,
    pub summary: LatentSummary<T>,
    /// σ² fixed at one (probit).
    pub sigma2_fixed: bool,
    pub iterations: usize,
    pub converged: bool,
    /// ELBO after each sweep when tracking is enabled.
    pub elbo_trace: Vec<T>,
}

impl<T: Real> VariationalState<T> {
    pub fn mu_alpha(&self) -> T {
        self.theta.mu_alpha
    }

    pub fn mu_beta(&self) -> &[T] {
        &self.theta.mu_beta
    }

    /// `E_q[σ²] = b/(a − 1)`, or one when σ² is fixed.
    pub fn sigma2_hat(&self) -> Result<T> {
        sigma2_hat(&self.theta, self.sigma2_fixed)
    }
}

pub(crate) fn sigma2_hat<T: Real>(theta: &Theta<T>, fixed: bool) -> Result<T> {
    if fixed {
        return Ok(T::one());
    }
    if !(theta.a > T::one()) {
        return Err(Error::ShapeTooSmall(theta.a.f64()));
    }
    Ok(theta.b / (theta.a - T::one()))
}

fn finite<T: Real>(v: T, term: &'static str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical(term))
    }
}

/// `Σ (m_i − μ_α − x_iᵀμ_β)²` from the summary; exact because `X` is centered.
pub fn residual_ss<T: Real>(summary: &LatentSummary<T>, theta: &Theta<T>, sub: &Submodel<T>) -> T {
    let n = T::from_usize_lossy(summary.n);
    let shift = summary.mean_m - theta.mu_alpha;
    let cross = linalg::dot(&theta.mu_beta, &summary.xt_m);
    let quad = quad_form(&sub.gk, &theta.mu_beta, &theta.mu_beta);
    let two = T::lit(2.0);
    (summary.centered_ss + n * shift * shift - two * cross + quad).max(T::zero())
}

// tr(A B) for symmetric row-major A, B
fn trace_product<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// One refresh of the regression block from the latent summary.
///
/// `μ_α = m̄`, `ω_α = b/(na)`, `μ_β = δ G_k⁻¹ X_kᵀm`, `Ω_β = δ (b/a) G_k⁻¹`,
/// then `a = (n+p_k)/2` and
/// `b = ½[RSS + Σs + nω_α + μ_βᵀG_kμ_β/g + (1 + 1/g) tr(G_kΩ_β)]`
/// unless σ² is fixed.
pub fn update_theta<T: Real>(
    theta: &mut Theta<T>,
    summary: &LatentSummary<T>,
    sub: &Submodel<T>,
    g: T,
    sigma2_fixed: bool,
) -> Result<()> {
    let n = T::from_usize_lossy(summary.n);
    let k = sub.size();
    let delta = g / (T::one() + g);
    let xi = if sigma2_fixed { T::one() } else { theta.xi() };

    theta.mu_alpha = finite(summary.mean_m, "mu_alpha")?;
    theta.omega_alpha = finite(xi / n, "omega_alpha")?;
    theta.mu_beta = sub.solve(&summary.xt_m).into_iter().map(|v| v * delta).collect();
    if theta.mu_beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("mu_beta"));
    }
    let scale = delta * xi;
    theta.omega_beta = sub.ginv.iter().map(|&v| v * scale).collect();

    if sigma2_fixed {
        theta.a = T::one();
        theta.b = T::one();
        return Ok(());
    }
    let half = T::lit(0.5);
    theta.a = half * T::from_usize_lossy(summary.n + k);
    let rss = residual_ss(summary, theta, sub);
    let quad = quad_form(&sub.gk, &theta.mu_beta, &theta.mu_beta);
    let tr = trace_product(&sub.gk, &theta.omega_beta);
    let b = half * (rss + summary.sum_s + n * theta.omega_alpha + quad / g + (T::one() + T::one() / g) * tr);
    theta.b = finite(b, "b")?;
    if !(theta.b > T::zero()) {
        return Err(Error::numerical("b"));
    }
    Ok(())
}

/// Evidence lower bound of `q(z) q(α) q(β) q(σ²)`.
///
/// Sum of the expected log-likelihood, the Gaussian regression term, the
/// g-prior, the `1/σ²` prior and the entropies of every factor. When σ² is
/// fixed the `q(σ²)` terms vanish and `τ = 1`.
pub fn master_elbo<T: Real>(
    theta: &Theta<T>,
    summary: &LatentSummary<T>,
    sub: &Submodel<T>,
    g: T,
    sigma2_fixed: bool,
) -> Result<T> {
    let half = T::lit(0.5);
    let ln2pi = T::ln_2pi();
    let n = T::from_usize_lossy(summary.n);
    let k = T::from_usize_lossy(sub.size());
    let tau = if sigma2_fixed { T::one() } else { theta.a / theta.b };

    let tr = trace_product(&sub.gk, &theta.omega_beta);
    let quad = quad_form(&sub.gk, &theta.mu_beta, &theta.mu_beta);
    let rss = residual_ss(summary, theta, sub);
    let spread = summary.sum_s + n * theta.omega_alpha + tr + rss;

    let ln_det_omega = if sub.size() == 0 {
        T::zero()
    } else {
        Cholesky::factor(&theta.omega_beta, sub.size(), T::zero())
            .map_err(|_| Error::numerical("Omega_beta"))?
            .log_det()
    };
    let entropy_ab = half * (ln2pi + T::one() + theta.omega_alpha.ln()) + half * (k * (ln2pi + T::one()) + ln_det_omega);

    let mut elbo = summary.sum_expected_loglik - half * (n + k) * ln2pi - half * tau * spread - half * k * g.ln()
        + half * sub.log_det
        - half * tau / g * (tr + quad)
        + summary.sum_entropy
        + entropy_ab;

    if !sigma2_fixed {
        let (a, b) = (theta.a, theta.b);
        let e_ln_sigma2 = b.ln() - a.digamma();
        let entropy_sigma2 = a + b.ln() + a.ln_gamma() - (T::one() + a) * a.digamma();
        elbo += -half * (n + k) * e_ln_sigma2 - e_ln_sigma2 + entropy_sigma2;
    }
    finite(elbo, "elbo")
}

/// Family-specific starting latent moments.
pub fn initial_latent<T: Real>(dataset: &Dataset<T>) -> Latent<T> {
    let y = dataset.y();
    let m: Vec<T> = match dataset.family() {
        Family::Probit => y.iter().map(|&v| T::lit(2.0) * v - T::one()).collect(),
        Family::Tobit => {
            let yl = dataset.y_lower().expect("tobit datasets carry a bound");
            y.iter().map(|&v| if v > yl { v } else { yl - T::lit(0.5) }).collect()
        }
        Family::Star => y
            .iter()
            .map(|&v| {
                let (lo, hi) = star_interval(v.f64());
                T::lit(if v.f64() < 1.0 { -0.5 } else { 0.5 * (lo + hi) })
            })
            .collect(),
        Family::Pln => y.iter().map(|&v| T::lit((v.f64() + 0.5).ln())).collect(),
    };
    let s = match dataset.family() {
        Family::Tobit => {
            let yl = dataset.y_lower().expect("tobit datasets carry a bound");
            y.iter().map(|&v| if v > yl { T::zero() } else { T::one() }).collect()
        }
        _ => vec![T::one(); m.len()],
    };
    Latent { m, s }
}

/// Summary of latent moments not produced by a site pass (initialization):
/// only the quantities the θ-block reads are filled.
pub fn summarize_moments<T: Real>(dataset: &Dataset<T>, latent: &Latent<T>, cols: &[usize]) -> LatentSummary<T> {
    let (mean_m, centered_ss) = mean_and_css(&latent.m);
    LatentSummary {
        n: latent.m.len(),
        mean_m,
        centered_ss,
        xt_m: dataset.xt_dot(cols, &latent.m),
        sum_s: latent.s.iter().copied().sum(),
        sum_entropy: T::zero(),
        sum_log_q: T::zero(),
        sum_expected_loglik: T::zero(),
        sum_loglik_at_mean: T::zero(),
    }
}

fn mean_and_css<T: Real>(m: &[T]) -> (T, T) {
    let mean = m.iter().copied().sum::<T>() / T::from_usize_lossy(m.len());
    let css = m
        .iter()
        .map(|&v| {
            let d = v - mean;
            d * d
        })
        .sum();
    (mean, css)
}

#[derive(Clone, Copy)]
struct SiteInput<T> {
    family: Family,
    xi: T,
    tau: T,
    y_lower: T,
}

fn update_site<T: Real>(inp: SiteInput<T>, y: T, eta: T, m: T, s: T, pln: &PlnConfig) -> Result<(SiteMoments<T>, T, T)> {
    let site = match inp.family {
        Family::Probit => update_z_probit(eta, y),
        Family::Tobit => update_z_tobit(eta, inp.xi, y, inp.y_lower)?,
        Family::Star => update_z_star(eta, inp.xi, y)?,
        Family::Pln => {
            let init = PlnSiteParams { m: m.f64(), s: s.f64(), converged: false, newton_iters: 0 };
            let p = update_z_pln(y.f64(), eta.f64(), inp.tau.f64(), init, pln);
            pln_site_moments(&p)
        }
    };
    let (yf, mf, sf) = (y.f64(), site.m.f64(), site.s.f64());
    let ell = T::lit(expected_loglik(inp.family, yf, mf, sf));
    let llm = T::lit(loglik_at(inp.family, yf, mf));
    Ok((site, ell, llm))
}

/// Refreshes every `q(z_i)` given the linear predictor `eta`, the latent
/// variance `ξ = b/a` and precision `τ = a/b`.
#[allow(clippy::too_many_arguments)]
pub fn update_latent<T: Real>(
    dataset: &Dataset<T>,
    eta: &[T],
    xi: T,
    tau: T,
    latent: &mut Latent<T>,
    cols: &[usize],
    pln: &PlnConfig,
    parallel: bool,
) -> Result<LatentSummary<T>> {
    let inp = SiteInput {
        family: dataset.family(),
        xi,
        tau,
        y_lower: dataset.y_lower().unwrap_or(T::zero()),
    };
    let y = dataset.y();
    let n = y.len();
    let mut sum_entropy = T::zero();
    let mut sum_log_q = T::zero();
    let mut sum_ell = T::zero();
    let mut sum_llm = T::zero();

    if parallel {
        let results: Vec<Result<(SiteMoments<T>, T, T)>> = (0..n)
            .into_par_iter()
            .with_min_len(1024)
            .map(|i| update_site(inp, y[i], eta[i], latent.m[i], latent.s[i], pln))
            .collect();
        for (i, r) in results.into_iter().enumerate() {
            let (site, ell, llm) = r?;
            latent.m[i] = site.m;
            latent.s[i] = site.s;
            sum_entropy += site.entropy;
            sum_log_q += site.log_q_at_mean;
            sum_ell += ell;
            sum_llm += llm;
        }
    } else {
        for i in 0..n {
            let (site, ell, llm) = update_site(inp, y[i], eta[i], latent.m[i], latent.s[i], pln)?;
            latent.m[i] = site.m;
            latent.s[i] = site.s;
            sum_entropy += site.entropy;
            sum_log_q += site.log_q_at_mean;
            sum_ell += ell;
            sum_llm += llm;
        }
    }

    let (mean_m, centered_ss) = mean_and_css(&latent.m);
    let summary = LatentSummary {
        n,
        mean_m: finite(mean_m, "latent mean")?,
        centered_ss,
        xt_m: dataset.xt_dot(cols, &latent.m),
        sum_s: latent.s.iter().copied().sum(),
        sum_entropy: finite(sum_entropy, "latent entropy")?,
        sum_log_q,
        sum_expected_loglik: sum_ell,
        sum_loglik_at_mean: sum_llm,
    };
    Ok(summary)
}

fn max_rel_change<T: Real>(old: &[T], new: &[T]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&o, &n)| ((n - o).abs() / o.abs().max(T::lit(1e-8))).f64())
        .fold(0.0, f64::max)
}

/// Runs CAVI for `model` until the θ-block settles.
///
/// A warm start supplies the latent moments and `q(σ²)`; when it belongs to
/// the same model its θ also seeds the convergence check.
pub fn run_cavi<T: Real>(
    dataset: &Dataset<T>,
    xp: &CrossProducts<T>,
    model: &ModelIndex,
    config: &FitConfig,
    warm_start: Option<&VariationalState<T>>,
) -> Result<VariationalState<T>> {
    config.validate()?;
    let sub = submodel_chol(xp, model, T::lit(config.ridge))?;
    run_cavi_with(dataset, &sub, config, warm_start)
}

// Regression block paired with the latent pass it produced.
struct Point<T> {
    theta: Theta<T>,
    summary: LatentSummary<T>,
}

struct Sweeper<'a, T> {
    dataset: &'a Dataset<T>,
    sub: &'a Submodel<T>,
    config: &'a FitConfig,
    g: T,
    fixed: bool,
    parallel: bool,
    iterations: usize,
}

impl<T: Real> Sweeper<'_, T> {
    fn tag(&self, e: Error) -> Error {
        match e {
            Error::Numerical { term, .. } => Error::Numerical { term, iteration: Some(self.iterations) },
            other => other,
        }
    }

    // q(z) given θ
    fn latent_pass(&mut self, theta: &Theta<T>, latent: &mut Latent<T>) -> Result<LatentSummary<T>> {
        self.iterations += 1;
        let eta = self.dataset.predictor(&self.sub.cols, theta.mu_alpha, &theta.mu_beta);
        let (xi, tau) = if self.fixed { (T::one(), T::one()) } else { (theta.xi(), theta.a / theta.b) };
        update_latent(self.dataset, &eta, xi, tau, latent, &self.sub.cols, &self.config.pln, self.parallel)
            .map_err(|e| self.tag(e))
    }

    fn elbo(&self, at: &Point<T>) -> Result<T> {
        master_elbo(&at.theta, &at.summary, self.sub, self.g, self.fixed).map_err(|e| self.tag(e))
    }

    // coordinates of the θ fixed-point map: (μ_α, μ_β, ln b)
    fn coords(&self, theta: &Theta<T>) -> Vec<T> {
        let mut v = Vec::with_capacity(theta.mu_beta.len() + 2);
        v.push(theta.mu_alpha);
        v.extend_from_slice(&theta.mu_beta);
        if !self.fixed {
            v.push(theta.b.ln());
        }
        v
    }

    fn theta_at(&self, template: &Theta<T>, v: &[T]) -> Theta<T> {
        let k = template.mu_beta.len();
        let mut theta = template.clone();
        theta.mu_alpha = v[0];
        theta.mu_beta = v[1..=k].to_vec();
        if !self.fixed {
            theta.b = v[k + 1].exp();
        }
        let n = T::from_usize_lossy(self.dataset.n());
        let delta = self.g / (T::one() + self.g);
        let xi = if self.fixed { T::one() } else { theta.xi() };
        theta.omega_alpha = xi / n;
        theta.omega_beta = self.sub.ginv.iter().map(|&w| w * delta * xi).collect();
        theta
    }
}

/// Iterates kept by the accelerated fixed-point solver.
const ANDERSON_DEPTH: usize = 5;

/// Anderson mixing on the θ fixed-point map `x ↦ U(L(x))`, where `L` is the
/// latent pass and `U` the regression-block update.
struct Anderson<T> {
    xs: Vec<Vec<T>>,
    gs: Vec<Vec<T>>,
}

impl<T: Real> Anderson<T> {
    fn new() -> Self {
        Self { xs: Vec::new(), gs: Vec::new() }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    /// Records `g = U(L(x))` and returns the mixed next iterate, if any.
    fn push(&mut self, x: Vec<T>, g: Vec<T>) -> Option<Vec<T>> {
        if self.xs.len() > ANDERSON_DEPTH {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        self.xs.push(x);
        self.gs.push(g);
        let h = self.xs.len();
        if h < 2 {
            return None;
        }
        let d = self.xs[0].len();
        let f = |i: usize, j: usize| self.gs[i][j] - self.xs[i][j];
        let m = h - 1;
        // columns: f_{i+1} − f_i
        let df: Vec<Vec<T>> = (0..m).map(|i| (0..d).map(|j| f(i + 1, j) - f(i, j)).collect()).collect();
        let fk: Vec<T> = (0..d).map(|j| f(m, j)).collect();
        let mut normal = vec![T::zero(); m * m];
        for a in 0..m {
            for b in 0..m {
                normal[a * m + b] = linalg::dot(&df[a], &df[b]);
            }
        }
        let scale = (0..m).map(|a| normal[a * m + a]).fold(T::zero(), |acc, v| acc.max(v));
        if !(scale > T::zero()) {
            return None;
        }
        for a in 0..m {
            normal[a * m + a] += T::lit(1e-12) * scale;
        }
        let rhs: Vec<T> = df.iter().map(|c| linalg::dot(c, &fk)).collect();
        let gamma = Cholesky::factor(&normal, m, T::zero()).ok()?.solve(&rhs);
        let mut next = self.gs[m].clone();
        for (i, &gi) in gamma.iter().enumerate() {
            for (j, v) in next.iter_mut().enumerate() {
                *v -= gi * (self.gs[i + 1][j] - self.gs[i][j]);
            }
        }
        next.iter().all(|v| v.is_finite()).then_some(next)
    }
}

/// [`run_cavi`] with a prebuilt factorization.
///
/// Plain CAVI alternates the regression-block update with a latent pass.
/// With `config.accelerate` the regression block entering each latent pass is
/// instead an Anderson mixture of recent updates over `(μ_α, μ_β, ln b)`; a
/// mixed point is kept only if its ELBO does not fall below the current one,
/// otherwise the plain update is used and the history restarts. Convergence
/// is judged on the plain update in both modes, and the returned `q(z)` is
/// always the latent pass of the returned θ.
pub fn run_cavi_with<T: Real>(
    dataset: &Dataset<T>,
    sub: &Submodel<T>,
    config: &FitConfig,
    warm_start: Option<&VariationalState<T>>,
) -> Result<VariationalState<T>> {
    let family = dataset.family();
    let fixed = family.sigma2_fixed();
    let mut sw = Sweeper {
        dataset,
        sub,
        config,
        g: T::lit(config.g_for(dataset.n())),
        fixed,
        parallel: dataset.n() >= config.parallel_min_n,
        iterations: 0,
    };

    let mut trace = Vec::new();
    let mut latent;
    let mut point = match warm_start {
        Some(w) if w.family == family && w.latent.m.len() == dataset.n() && w.model == sub.model => {
            latent = (*w.latent).clone();
            Point { theta: w.theta.clone(), summary: w.summary.clone() }
        }
        other => {
            let mut theta = Theta::initial(sub.size());
            latent = match other {
                Some(w) if w.family == family && w.latent.m.len() == dataset.n() => {
                    theta.a = w.theta.a;
                    theta.b = w.theta.b;
                    (*w.latent).clone()
                }
                _ => initial_latent(dataset),
            };
            let start = summarize_moments(dataset, &latent, &sub.cols);
            update_theta(&mut theta, &start, sub, sw.g, fixed).map_err(|e| sw.tag(e))?;
            let summary = sw.latent_pass(&theta, &mut latent)?;
            let p = Point { theta, summary };
            if config.track_elbo {
                trace.push(sw.elbo(&p)?);
            }
            p
        }
    };

    let mut mixer = Anderson::new();
    let mut current_elbo = None;
    let mut converged = false;
    while sw.iterations < config.max_iter {
        let mut plain = point.theta.clone();
        update_theta(&mut plain, &point.summary, sub, sw.g, fixed).map_err(|e| sw.tag(e))?;
        if max_rel_change(&point.theta.monitored(), &plain.monitored()) <= config.tol {
            let summary = sw.latent_pass(&plain, &mut latent)?;
            point = Point { theta: plain, summary };
            if config.track_elbo {
                trace.push(sw.elbo(&point)?);
            }
            converged = true;
            break;
        }

        let mixed = if config.accelerate {
            mixer.push(sw.coords(&point.theta), sw.coords(&plain)).map(|x| sw.theta_at(&plain, &x))
        } else {
            None
        };
        let mut next = None;
        if let Some(theta) = mixed {
            let base = match current_elbo {
                Some(e) => e,
                None => sw.elbo(&point)?,
            };
            match sw.latent_pass(&theta, &mut latent) {
                Ok(summary) => {
                    let trial = Point { theta, summary };
                    match sw.elbo(&trial) {
                        Ok(e) if e >= base => next = Some((trial, Some(e))),
                        Ok(_) | Err(Error::Numerical { .. }) => mixer.reset(),
                        Err(e) => return Err(e),
                    }
                }
                Err(Error::Numerical { .. }) => mixer.reset(),
                Err(e) => return Err(e),
            }
            if next.is_none() && sw.iterations >= config.max_iter {
                break;
            }
        }
        let (p, e) = match next {
            Some(found) => found,
            None => {
                let summary = sw.latent_pass(&plain, &mut latent)?;
                let p = Point { theta: plain, summary };
                let e = if config.accelerate { Some(sw.elbo(&p)?) } else { None };
                (p, e)
            }
        };
        point = p;
        current_elbo = e;
        if config.track_elbo {
            trace.push(match e {
                Some(e) => e,
                None => sw.elbo(&point)?,
            });
        }
    }

    Ok(VariationalState {
        model: sub.model,
        family,
        theta: point.theta,
        latent: Arc::new(latent),
        summary: point.summary,
        sigma2_fixed: fixed,
        iterations: sw.iterations,
        converged,
        elbo_trace: trace,
    })
}

/// ELBO of a finished state.
pub fn state_elbo<T: Real>(state: &VariationalState<T>, sub: &Submodel<T>, g: T) -> Result<T> {
    master_elbo(&state.theta, &state.summary, sub, g, state.sigma2_fixed)
}
