//! Model evidence: the variational Bayes criterion, the ELBO, and the
//! approximate scheme that freezes latent moments at the null-model fit.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cavi::{master_elbo, residual_ss, run_cavi_with, sigma2_hat, update_theta, FitConfig, LatentSummary, Theta, VariationalState};
use crate::data::{submodel_chol, CrossProducts, Dataset, Submodel};
use crate::error::{Error, Result};
use crate::linalg::{quad_form, Cholesky};
use crate::model_space::{is_admissible, log_model_prior, ModelIndex, ModelPriorSpec};
use crate::scalar::Real;

/// Fitting scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Full CAVI per model.
    Vb,
    /// Latent moments frozen at the null model; only θ is refit.
    Avb,
}

/// Quantity reported as the log-evidence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Vbc,
    Elbo,
}

macro_rules! name_enum {
    ($t:ty, $($v:path => $s:literal),+) => {
        impl $t {
            pub fn name(&self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok($v),)+
                    other => Err(Error::Parameter(format!(
                        concat!("unknown ", stringify!($t), " {:?} (expected one of: ", $($s, " ",)+ ")"),
                        other
                    ))),
                }
            }
        }
    };
}

name_enum!(Method, Method::Vb => "vb", Method::Avb => "avb");
name_enum!(Criterion, Criterion::Vbc => "vbc", Criterion::Elbo => "elbo");

/// Evidence of one model; coefficients are mapped back to all `p` covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub model: ModelIndex,
    pub log_evidence: f64,
    pub log_prior: f64,
    pub criterion: Criterion,
    pub method: Method,
    pub iters: usize,
    pub converged: bool,
    pub mu_alpha: f64,
    /// Length `p`; zero for excluded covariates.
    pub beta: Vec<f64>,
    /// `E_q[σ²]`, one when fixed.
    pub sigma2: f64,
    pub wall_time_ns: u64,
}

impl EvidenceRecord {
    /// `log_evidence + log_prior`.
    pub fn log_posterior(&self) -> f64 {
        self.log_evidence + self.log_prior
    }

    /// `−2 · log_evidence`, the criterion on the deviance scale.
    pub fn vbc_scaled(&self) -> f64 {
        -2.0 * self.log_evidence
    }
}

fn check<T: Real>(v: T, term: &'static str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical(term))
    }
}

/// Log-VBC of a fitted state: the candidate's formula evaluated at the latent
/// means and `θ̂ = (μ_α, μ_β, b/(a−1))`.
///
/// `ln p(y|ẑ) + ln p(ẑ|θ̂) + ln p(θ̂) − ln q(ẑ) − ln q(θ̂)`, where the improper
/// `1/σ²` prior contributes `−ln σ̂²`.
pub fn log_vbc<T: Real>(
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
    let s2 = sigma2_hat(theta, sigma2_fixed)?;
    let ln_s2 = s2.ln();

    let rss = residual_ss(summary, theta, sub);
    let log_p_z = -half * n * (ln2pi + ln_s2) - rss / (T::lit(2.0) * s2);

    let quad = quad_form(&sub.gk, &theta.mu_beta, &theta.mu_beta);
    let mut log_p_theta = -half * k * (ln2pi + g.ln() + ln_s2) + half * sub.log_det - quad / (T::lit(2.0) * g * s2);

    let ln_det_omega = if sub.size() == 0 {
        T::zero()
    } else {
        Cholesky::factor(&theta.omega_beta, sub.size(), T::zero())
            .map_err(|_| Error::numerical("Omega_beta"))?
            .log_det()
    };
    let mut log_q_theta = -half * (ln2pi + theta.omega_alpha.ln()) - half * (k * ln2pi + ln_det_omega);

    if !sigma2_fixed {
        log_p_theta -= ln_s2;
        let (a, b) = (theta.a, theta.b);
        log_q_theta += a * b.ln() - a.ln_gamma() - (a + T::one()) * ln_s2 - b / s2;
    }

    let total = summary.sum_loglik_at_mean + check(log_p_z, "log p(z|theta)")? + check(log_p_theta, "log p(theta)")?
        - check(summary.sum_log_q, "log q(z)")?
        - check(log_q_theta, "log q(theta)")?;
    check(total, "log_vbc")
}

/// Log-VBC of a finished state.
pub fn state_log_vbc<T: Real>(state: &VariationalState<T>, sub: &Submodel<T>, g: T) -> Result<T> {
    log_vbc(&state.theta, &state.summary, sub, g, state.sigma2_fixed)
}

/// Latent moments of the converged null model, shared by every AVB fit.
#[derive(Clone, Debug)]
pub struct NullCache<T> {
    pub null_state: VariationalState<T>,
    /// `Xᵀm̄` over all `p` covariates.
    pub xt_mbar: Vec<T>,
    pub alpha0: T,
    pub sigma2_0: T,
}

impl<T: Real> NullCache<T> {
    pub fn m_bar(&self) -> &[T] {
        &self.null_state.latent.m
    }

    pub fn s_bar(&self) -> &[T] {
        &self.null_state.latent.s
    }

    fn summary_for(&self, cols: &[usize]) -> LatentSummary<T> {
        self.null_state.summary.with_xt_m(cols.iter().map(|&j| self.xt_mbar[j]).collect())
    }
}

/// Fits the null model by full CAVI and freezes its latent moments.
pub fn build_null_cache<T: Real>(dataset: &Dataset<T>, xp: &CrossProducts<T>, config: &FitConfig) -> Result<NullCache<T>> {
    config.validate()?;
    let null = ModelIndex::null(dataset.p())?;
    let sub = submodel_chol(xp, &null, T::lit(config.ridge))?;
    let null_state = run_cavi_with(dataset, &sub, config, None)?;
    let all: Vec<usize> = (0..dataset.p()).collect();
    let xt_mbar = dataset.xt_dot(&all, &null_state.latent.m);
    let sigma2_0 = null_state.sigma2_hat()?;
    Ok(NullCache { alpha0: null_state.theta.mu_alpha, sigma2_0, xt_mbar, null_state })
}

/// Refits only the regression block against the cached latent moments.
///
/// With σ² fixed one θ refresh is already the fixed point; otherwise the
/// refresh is repeated until `(μ_α, μ_β, b/a)` settle. A warm start only
/// supplies `q(σ²)`.
pub fn run_avb<T: Real>(
    cache: &NullCache<T>,
    sub: &Submodel<T>,
    config: &FitConfig,
    g: T,
    warm: Option<&VariationalState<T>>,
) -> Result<VariationalState<T>> {
    let null = &cache.null_state;
    let fixed = null.sigma2_fixed;
    let summary = cache.summary_for(&sub.cols);
    let mut theta = Theta {
        mu_alpha: null.theta.mu_alpha,
        omega_alpha: null.theta.omega_alpha,
        mu_beta: vec![T::zero(); sub.size()],
        omega_beta: vec![T::zero(); sub.size() * sub.size()],
        a: null.theta.a,
        b: null.theta.b,
    };
    if let Some(w) = warm {
        theta.a = w.theta.a;
        theta.b = w.theta.b;
    }
    let mut prev: Option<Vec<T>> = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        update_theta(&mut theta, &summary, sub, g, fixed)?;
        iterations += 1;
        let mut now = Vec::with_capacity(sub.size() + 2);
        now.push(theta.mu_alpha);
        now.extend_from_slice(&theta.mu_beta);
        now.push(theta.xi());
        if fixed {
            converged = true;
            break;
        }
        if let Some(old) = &prev {
            let change = old
                .iter()
                .zip(&now)
                .map(|(&o, &n)| ((n - o).abs() / o.abs().max(T::lit(1e-8))).f64())
                .fold(0.0, f64::max);
            if change <= config.tol {
                converged = true;
                break;
            }
        }
        prev = Some(now);
    }
    Ok(VariationalState {
        model: sub.model,
        family: null.family,
        theta,
        latent: Arc::clone(&null.latent),
        summary,
        sigma2_fixed: fixed,
        iterations,
        converged,
        elbo_trace: Vec::new(),
    })
}

pub type MemoKey = (u64, Method, Criterion);

/// Evidence records keyed by `(mask, method, criterion)`.
///
/// Unbounded unless a capacity is given, in which case the least recently
/// used record is evicted.
#[derive(Debug, Default)]
pub struct EvidenceMemo {
    inner: Mutex<MemoInner>,
    capacity: Option<usize>,
}

#[derive(Debug, Default)]
struct MemoInner {
    records: HashMap<MemoKey, (EvidenceRecord, u64)>,
    clock: u64,
}

impl EvidenceMemo {
    pub fn new(capacity: Option<usize>) -> Self {
        Self { inner: Mutex::default(), capacity }
    }

    pub fn get(&self, key: &MemoKey) -> Option<EvidenceRecord> {
        let mut inner = self.inner.lock().expect("memo lock");
        inner.clock += 1;
        let now = inner.clock;
        inner.records.get_mut(key).map(|(r, used)| {
            *used = now;
            r.clone()
        })
    }

    pub fn insert(&self, key: MemoKey, record: EvidenceRecord) {
        let mut inner = self.inner.lock().expect("memo lock");
        inner.clock += 1;
        let now = inner.clock;
        inner.records.insert(key, (record, now));
        if let Some(cap) = self.capacity {
            while inner.records.len() > cap.max(1) {
                let oldest = *inner.records.iter().min_by_key(|(_, (_, used))| *used).expect("non-empty").0;
                inner.records.remove(&oldest);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("memo lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records, in mask order.
    pub fn records(&self) -> Vec<EvidenceRecord> {
        let inner = self.inner.lock().expect("memo lock");
        let mut v: Vec<EvidenceRecord> = inner.records.values().map(|(r, _)| r.clone()).collect();
        v.sort_by_key(|r| r.model.bits());
        v
    }
}

/// Result of one evaluation; `state` is absent on memo hits.
#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub record: EvidenceRecord,
    pub state: Option<VariationalState<T>>,
    pub cached: bool,
}

/// Evaluates models on one dataset with a fixed method and criterion.
pub struct Evaluator<'a, T> {
    pub dataset: &'a Dataset<T>,
    pub xp: &'a CrossProducts<T>,
    pub config: &'a FitConfig,
    pub prior: ModelPriorSpec,
    pub method: Method,
    pub criterion: Criterion,
    cache: Option<Arc<NullCache<T>>>,
    memo: Arc<EvidenceMemo>,
}

impl<T> Clone for Evaluator<'_, T> {
    fn clone(&self) -> Self {
        Self {
            dataset: self.dataset,
            xp: self.xp,
            config: self.config,
            prior: self.prior,
            method: self.method,
            criterion: self.criterion,
            cache: self.cache.clone(),
            memo: Arc::clone(&self.memo),
        }
    }
}

impl<'a, T: Real> Evaluator<'a, T> {
    /// Builds the null cache up front when `method` is AVB.
    pub fn new(
        dataset: &'a Dataset<T>,
        xp: &'a CrossProducts<T>,
        config: &'a FitConfig,
        prior: ModelPriorSpec,
        method: Method,
        criterion: Criterion,
    ) -> Result<Self> {
        config.validate()?;
        let cache = match method {
            Method::Avb => Some(Arc::new(build_null_cache(dataset, xp, config)?)),
            Method::Vb => None,
        };
        Ok(Self { dataset, xp, config, prior, method, criterion, cache, memo: Arc::new(EvidenceMemo::default()) })
    }

    /// Replaces the memo table, e.g. to share one between chains.
    pub fn with_memo(mut self, memo: Arc<EvidenceMemo>) -> Self {
        self.memo = memo;
        self
    }

    /// Uses an existing null cache instead of the one built in [`Self::new`].
    pub fn with_cache(mut self, cache: Arc<NullCache<T>>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn memo(&self) -> &Arc<EvidenceMemo> {
        &self.memo
    }

    pub fn null_cache(&self) -> Option<&Arc<NullCache<T>>> {
        self.cache.as_ref()
    }

    pub fn g(&self) -> T {
        T::lit(self.config.g_for(self.dataset.n()))
    }

    /// Fits `model` (or returns its memoized record with `iters = 0`).
    pub fn evaluate(&self, model: &ModelIndex, warm: Option<&VariationalState<T>>) -> Result<Evaluation<T>> {
        let key = (model.bits(), self.method, self.criterion);
        if let Some(mut record) = self.memo.get(&key) {
            record.iters = 0;
            record.wall_time_ns = 0;
            return Ok(Evaluation { record, state: None, cached: true });
        }
        if !is_admissible(model, self.xp) {
            return Err(Error::Inadmissible(model.to_bitstring()));
        }
        let start = Instant::now();
        let sub = submodel_chol(self.xp, model, T::lit(self.config.ridge))?;
        let g = self.g();
        let state = match (self.method, &self.cache) {
            (Method::Vb, _) => run_cavi_with(self.dataset, &sub, self.config, warm)?,
            (Method::Avb, Some(cache)) => run_avb(cache, &sub, self.config, g, warm)?,
            (Method::Avb, None) => return Err(Error::Parameter("AVB evaluation needs a null cache".into())),
        };
        let log_evidence = match self.criterion {
            Criterion::Vbc => state_log_vbc(&state, &sub, g)?,
            Criterion::Elbo => master_elbo(&state.theta, &state.summary, &sub, g, state.sigma2_fixed)?,
        };
        let wall_time_ns = start.elapsed().as_nanos() as u64;
        let record = self.record_for(model, &state, log_evidence.f64(), wall_time_ns)?;
        self.memo.insert(key, record.clone());
        Ok(Evaluation { record, state: Some(state), cached: false })
    }

    fn record_for(&self, model: &ModelIndex, state: &VariationalState<T>, log_evidence: f64, wall_time_ns: u64) -> Result<EvidenceRecord> {
        let mut beta = vec![0.0; model.p_total()];
        for (j, &b) in model.indices().into_iter().zip(&state.theta.mu_beta) {
            beta[j] = b.f64();
        }
        Ok(EvidenceRecord {
            model: *model,
            log_evidence,
            log_prior: log_model_prior(model, &self.prior),
            criterion: self.criterion,
            method: self.method,
            iters: state.iterations,
            converged: state.converged,
            mu_alpha: state.theta.mu_alpha.f64(),
            beta,
            sigma2: state.sigma2_hat()?.f64(),
            wall_time_ns,
        })
    }
}

/// One-shot evaluation without a persistent memo.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_model<T: Real>(
    dataset: &Dataset<T>,
    xp: &CrossProducts<T>,
    model: &ModelIndex,
    config: &FitConfig,
    prior: ModelPriorSpec,
    method: Method,
    criterion: Criterion,
    warm: Option<&VariationalState<T>>,
) -> Result<Evaluation<T>> {
    Evaluator::new(dataset, xp, config, prior, method, criterion)?.evaluate(model, warm)
}
