//! Synthetic designs and accuracy metrics.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cavi::VariationalState;
use crate::data::{prepare_dataset, Dataset, Family, PrepareOptions, RawTable};
use crate::error::{Error, Result};
use crate::model_space::ModelIndex;
use crate::rng::stream_rng;
use crate::scalar::Real;

const STREAM_COVARIATES: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_OUTCOME: u64 = 2;

/// Coefficient presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `(0.5, −0.5, 0.25, −0.25, 0, …, 0)`
    Sparse,
    /// `(0.5, −0.5, 0.25, −0.25, 0.15, …, 0.15)`
    Dense,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sparse" => Ok(Preset::Sparse),
            "dense" => Ok(Preset::Dense),
            other => Err(Error::Parameter(format!("unknown preset `{other}`"))),
        }
    }
}

impl Preset {
    pub fn beta(&self, p: usize) -> Vec<f64> {
        let head = [0.5, -0.5, 0.25, -0.25];
        let tail = match self {
            Preset::Sparse => 0.0,
            Preset::Dense => 0.15,
        };
        (0..p).map(|j| if j < 4 { head[j] } else { tail }).collect()
    }
}

/// Default true `σ²` per family: fixed at one for probit, 0.1 for PLN and
/// 1.0 for tobit and STAR.
pub fn default_sigma2(family: Family) -> f64 {
    match family {
        Family::Pln => 0.1,
        _ => 1.0,
    }
}

/// Data-generating process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub family: Family,
    pub n: usize,
    pub p: usize,
    /// AR(1) correlation, `Σ_jk = ρ^|j−k|`.
    pub rho: f64,
    pub beta_true: Vec<f64>,
    pub alpha_true: f64,
    pub sigma2_true: f64,
    /// Tobit censoring point.
    pub y_lower: f64,
    pub seed: u64,
}

impl SimDesign {
    /// Preset design with `ρ = 0.25`, `α = 0` and the family's default `σ²`.
    pub fn preset(preset: Preset, family: Family, n: usize, p: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            p,
            rho: 0.25,
            beta_true: preset.beta(p),
            alpha_true: 0.0,
            sigma2_true: default_sigma2(family),
            y_lower: 0.0,
            seed,
        }
    }

    pub fn sparse(family: Family, n: usize, p: usize, seed: u64) -> Self {
        Self::preset(Preset::Sparse, family, n, p, seed)
    }

    pub fn dense(family: Family, n: usize, p: usize, seed: u64) -> Self {
        Self::preset(Preset::Dense, family, n, p, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Parameter(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.beta_true.len() != self.p {
            return Err(Error::Parameter(format!("beta_true has {} entries for p = {}", self.beta_true.len(), self.p)));
        }
        if !(self.sigma2_true > 0.0 && self.sigma2_true.is_finite()) {
            return Err(Error::Parameter(format!("sigma2_true must be positive, got {}", self.sigma2_true)));
        }
        if !self.alpha_true.is_finite() || self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(Error::Parameter("true coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Covariates with a nonzero true coefficient.
    pub fn truth(&self) -> Result<ModelIndex> {
        let idx: Vec<usize> = (0..self.p).filter(|&j| self.beta_true[j] != 0.0).collect();
        ModelIndex::from_indices(self.p, &idx)
    }

    fn latent_sd(&self) -> f64 {
        if self.family.sigma2_fixed() {
            1.0
        } else {
            self.sigma2_true.sqrt()
        }
    }
}

/// A simulated dataset with its raw table and truth.
#[derive(Clone, Debug)]
pub struct SimData<T> {
    pub dataset: Dataset<T>,
    pub table: RawTable,
    pub truth: ModelIndex,
    pub design: SimDesign,
    /// Seed actually used (the design seed, or its successor after a resample).
    pub seed: u64,
}

/// Row-major `n × p` draws from `N(0, Σ)` with `Σ_jk = ρ^|j−k|`.
///
/// Uses the lower Cholesky factor of the AR(1) matrix in its recursive form,
/// `x_j = ρ x_{j−1} + √(1−ρ²) e_j`.
pub fn draw_covariates<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let scale = (1.0 - rho * rho).sqrt();
    let mut columns = vec![Vec::with_capacity(n); p];
    for _ in 0..n {
        let mut prev = 0.0;
        for (j, col) in columns.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            let x = if j == 0 { e } else { rho * prev + scale * e };
            col.push(x);
            prev = x;
        }
    }
    columns
}

fn link<R: Rng + ?Sized>(design: &SimDesign, z: f64, rng: &mut R) -> Result<f64> {
    Ok(match design.family {
        Family::Probit => f64::from(u8::from(z > 0.0)),
        Family::Tobit => z.max(design.y_lower),
        Family::Star => z.exp().floor(),
        Family::Pln => {
            let rate = z.exp();
            if rate <= 0.0 {
                0.0
            } else {
                Poisson::new(rate).map_err(|e| Error::Parameter(format!("Poisson rate {rate}: {e}")))?.sample(rng)
            }
        }
    })
}

fn draw<T: Real>(design: &SimDesign, seed: u64) -> Result<SimData<T>> {
    let mut xrng = stream_rng(seed, STREAM_COVARIATES);
    let mut erng = stream_rng(seed, STREAM_NOISE);
    let mut yrng = stream_rng(seed, STREAM_OUTCOME);
    let columns = draw_covariates(design.n, design.p, design.rho, &mut xrng);
    let sd = design.latent_sd();
    let mut y = Vec::with_capacity(design.n);
    for i in 0..design.n {
        let mut z = design.alpha_true;
        for (col, b) in columns.iter().zip(&design.beta_true) {
            z += col[i] * b;
        }
        let e: f64 = StandardNormal.sample(&mut erng);
        y.push(link(design, z + sd * e, &mut yrng)?);
    }
    let names: Vec<String> = (1..=design.p).map(|j| format!("x{j}")).collect();
    let options = PrepareOptions {
        y_lower: (design.family == Family::Tobit).then_some(design.y_lower),
        names: Some(names.clone()),
    };
    let cols_t: Vec<Vec<T>> = columns.iter().map(|c| c.iter().map(|&v| T::lit(v)).collect()).collect();
    let y_t: Vec<T> = y.iter().map(|&v| T::lit(v)).collect();
    let dataset = prepare_dataset(cols_t, y_t, design.family, &options)?;
    let table = RawTable { names, columns, outcome_name: "y".into(), y };
    Ok(SimData { dataset, table, truth: design.truth()?, design: design.clone(), seed })
}

/// Draws one dataset. A draw that violates an existence precondition is
/// retried once with `seed + 1`.
pub fn simulate<T: Real>(design: &SimDesign) -> Result<SimData<T>> {
    design.validate()?;
    match draw(design, design.seed) {
        Err(Error::Existence(_)) => draw(design, design.seed.wrapping_add(1)),
        other => other,
    }
}

/// `(1/p) Σ_j (pip_j − 1{j ∈ truth})²`.
pub fn brier(pips: &[f64], truth: &ModelIndex) -> Result<f64> {
    if pips.len() != truth.p_total() {
        return Err(Error::Parameter(format!("{} PIPs for p = {}", pips.len(), truth.p_total())));
    }
    if pips.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pips
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let t = if truth.contains(j) { 1.0 } else { 0.0 };
            (v - t) * (v - t)
        })
        .sum();
    Ok(s / pips.len() as f64)
}

/// Accuracy and consistency measures for one fitted dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub brier: Option<f64>,
    pub true_model_top: Option<bool>,
    pub rmse_alpha: f64,
    pub rmse_beta: f64,
    /// Absent when `σ²` is fixed.
    pub rmse_sigma2: Option<f64>,
    pub var_alpha: f64,
    /// Mean of the diagonal of `Ω_β` over included covariates.
    pub var_beta: f64,
    /// Inverse-gamma variance `b² / ((a−1)²(a−2))`; absent when fixed or `a ≤ 2`.
    pub var_sigma2: Option<f64>,
    pub wall_time_ns: BTreeMap<String, u64>,
}

/// Parameter-recovery metrics of one fit against the design truth.
///
/// The intercept is mapped back to uncentered covariates before comparison;
/// `μ_β` is expanded to all `p` positions with zeros for excluded covariates.
pub fn fit_metrics<T: Real>(state: &VariationalState<T>, dataset: &Dataset<T>, design: &SimDesign) -> Result<MetricsReport> {
    let p = design.p;
    let cols = state.model.indices();
    let mut beta = vec![0.0; p];
    for (k, &j) in cols.iter().enumerate() {
        beta[j] = state.theta.mu_beta[k].f64();
    }
    let means = dataset.column_means();
    let alpha = state.theta.mu_alpha.f64() - cols.iter().zip(&state.theta.mu_beta).map(|(&j, b)| means[j].f64() * b.f64()).sum::<f64>();
    let rmse_beta = if p == 0 {
        0.0
    } else {
        (beta.iter().zip(&design.beta_true).map(|(b, t)| (b - t).powi(2)).sum::<f64>() / p as f64).sqrt()
    };
    let k = cols.len();
    let var_beta = if k == 0 {
        0.0
    } else {
        (0..k).map(|i| state.theta.omega_beta[i * k + i].f64()).sum::<f64>() / k as f64
    };
    let (rmse_sigma2, var_sigma2) = if state.sigma2_fixed {
        (None, None)
    } else {
        let s2 = state.sigma2_hat()?.f64();
        let (a, b) = (state.theta.a.f64(), state.theta.b.f64());
        let var = (a > 2.0).then(|| b * b / ((a - 1.0).powi(2) * (a - 2.0)));
        (Some((s2 - design.sigma2_true).abs()), var)
    };
    Ok(MetricsReport {
        n: dataset.n(),
        rmse_alpha: (alpha - design.alpha_true).abs(),
        rmse_beta,
        rmse_sigma2,
        var_alpha: state.theta.omega_alpha.f64(),
        var_beta,
        var_sigma2,
        ..Default::default()
    })
}

/// One report per `(state, dataset)` pair, typically of growing `n`.
pub fn consistency_metrics<T: Real>(fits: &[(&VariationalState<T>, &Dataset<T>)], design: &SimDesign) -> Result<Vec<MetricsReport>> {
    fits.iter().map(|(s, d)| fit_metrics(*s, d, design)).collect()
}

/// Brier score and true-model recovery of a model-averaging summary.
pub fn selection_metrics(pips: &[f64], top_model: &ModelIndex, truth: &ModelIndex) -> Result<(f64, bool)> {
    Ok((brier(pips, truth)?, top_model == truth))
}
