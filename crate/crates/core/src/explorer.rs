//! Model-space enumeration, Metropolis–Hastings exploration and posterior
//! summaries.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{EvidenceMemo, EvidenceRecord, Evaluation, Evaluator};
use crate::model_space::{propose, ModelIndex};
use crate::rng::stream_rng;
use crate::scalar::Real;
use std::sync::Arc;

/// Largest `p` enumerated by default.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Every admissible model with its normalized posterior probability.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnumerationTable {
    pub p: usize,
    /// Admissible models in mask order.
    pub records: Vec<EvidenceRecord>,
    pub probabilities: Vec<f64>,
    /// Masks skipped as inadmissible (probability zero).
    pub inadmissible: Vec<ModelIndex>,
}

/// `ln Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalized probabilities from unnormalized log-weights.
pub fn normalize_log_weights(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs);
    xs.iter().map(|&x| (x - z).exp()).collect()
}

fn skippable(e: &Error) -> bool {
    matches!(e, Error::Inadmissible(_) | Error::Singular(_))
}

/// Evaluates all `2^p` models, visiting them in Gray-code order so each VB fit
/// warm-starts from a model differing in one covariate.
pub fn enumerate<T: Real>(evaluator: &Evaluator<'_, T>, cap: usize) -> Result<EnumerationTable> {
    let p = evaluator.dataset.p();
    if p > cap {
        return Err(Error::Parameter(format!(
            "p = {p} exceeds the enumeration cap of {cap}; use explore for larger model spaces"
        )));
    }
    let mut records = Vec::with_capacity(1 << p);
    let mut inadmissible = Vec::new();
    let mut warm = None;
    for i in 0u64..(1u64 << p) {
        let model = ModelIndex::from_bits(i ^ (i >> 1), p)?;
        match evaluator.evaluate(&model, warm.as_ref()) {
            Ok(Evaluation { record, state, .. }) => {
                if state.is_some() {
                    warm = state;
                }
                records.push(record);
            }
            Err(e) if skippable(&e) => inadmissible.push(model),
            Err(e) => return Err(e),
        }
    }
    records.sort_by_key(|r| r.model.bits());
    inadmissible.sort_by_key(|m| m.bits());
    let logw: Vec<f64> = records.iter().map(|r| r.log_posterior()).collect();
    let probabilities = normalize_log_weights(&logw);
    Ok(EnumerationTable { p, records, probabilities, inadmissible })
}

/// Settings of the Metropolis–Hastings model search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Models recorded per chain after burn-in.
    pub n_keep: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub chains: usize,
    /// Starting model; the null model when absent.
    pub initial: Option<ModelIndex>,
    /// Share one evidence memo between concurrently running chains. Faster,
    /// but VB evidences then depend on which chain fitted a model first.
    pub share_memo: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { n_keep: 10_000, burn_in: 2_000, seed: 1, chains: 1, initial: None, share_memo: false }
    }
}

/// One recorded step of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub chain: usize,
    pub iteration: usize,
    pub model: ModelIndex,
    pub log_evidence: f64,
    pub log_prior: f64,
    /// Whether the move into this step was accepted.
    pub accepted: bool,
}

/// Post-burn-in visits of all chains plus running accumulators.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplorationTrace {
    pub p: usize,
    pub visited: Vec<Visit>,
    /// Visit counts per covariate.
    pub pip_counts: Vec<u64>,
    /// Visit-weighted sums of `μ_β` on the original covariate positions.
    pub beta_sums: Vec<f64>,
    pub size_sum: f64,
    pub size_sq_sum: f64,
    pub n_kept: usize,
    pub seed: u64,
    pub config: ChainConfig,
    /// Accepted proposals over all iterations, burn-in included.
    pub acceptance_rate: f64,
    /// Distinct models evaluated, in mask order.
    pub records: Vec<EvidenceRecord>,
}

/// `min(0, (ln E_j + ln P_j + ln r(k|j)) − (ln E_k + ln P_k + ln r(j|k)))`.
pub fn log_acceptance(current_log_post: f64, target_log_post: f64, log_fwd: f64, log_rev: f64) -> f64 {
    let r = (target_log_post + log_rev) - (current_log_post + log_fwd);
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r.min(0.0)
    }
}

struct ChainOutput {
    visits: Vec<(Visit, Vec<f64>)>,
    accepted: usize,
    total: usize,
}

fn run_chain<T: Real>(evaluator: &Evaluator<'_, T>, config: &ChainConfig, chain: usize) -> Result<ChainOutput> {
    let p = evaluator.dataset.p();
    let mut rng = stream_rng(config.seed, chain as u64);
    let start = match config.initial {
        Some(m) => m,
        None => ModelIndex::null(p)?,
    };
    let first = evaluator.evaluate(&start, None)?;
    let mut current = first.record;
    let mut warm = first.state;
    let total = config.burn_in + config.n_keep;
    let mut visits = Vec::with_capacity(config.n_keep);
    let mut accepted_count = 0;
    for it in 0..total {
        let proposal = propose(&current.model, &mut rng);
        let u: f64 = rng.random();
        let mut accepted = false;
        match evaluator.evaluate(&proposal.target, warm.as_ref()) {
            Ok(Evaluation { record, state, .. }) => {
                let log_alpha =
                    log_acceptance(current.log_posterior(), record.log_posterior(), proposal.log_fwd, proposal.log_rev);
                if u.ln() < log_alpha {
                    accepted = true;
                    accepted_count += 1;
                    current = record;
                    if state.is_some() {
                        warm = state;
                    }
                }
            }
            Err(e) if skippable(&e) => {}
            Err(e) => return Err(e),
        }
        if it >= config.burn_in {
            let visit = Visit {
                chain,
                iteration: it,
                model: current.model,
                log_evidence: current.log_evidence,
                log_prior: current.log_prior,
                accepted,
            };
            visits.push((visit, current.beta.clone()));
        }
    }
    Ok(ChainOutput { visits, accepted: accepted_count, total })
}

/// Runs `config.chains` independent chains (in parallel when threads allow)
/// and pools their post-burn-in visits.
pub fn explore<T: Real>(evaluator: &Evaluator<'_, T>, config: &ChainConfig) -> Result<ExplorationTrace> {
    let p = evaluator.dataset.p();
    if p == 0 {
        return Err(Error::Parameter("exploration needs at least one covariate".into()));
    }
    if config.chains == 0 || config.n_keep == 0 {
        return Err(Error::Parameter("need at least one chain and one kept model".into()));
    }
    let shared = Arc::clone(evaluator.memo());
    let per_chain: Vec<Result<(ChainOutput, Vec<EvidenceRecord>)>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let memo = if config.share_memo { Arc::clone(&shared) } else { Arc::new(EvidenceMemo::default()) };
            let chain_eval = evaluator.clone().with_memo(Arc::clone(&memo));
            let out = run_chain(&chain_eval, config, c)?;
            Ok((out, if config.share_memo { Vec::new() } else { memo.records() }))
        })
        .collect();

    let mut visited = Vec::with_capacity(config.n_keep * config.chains);
    let mut pip_counts = vec![0u64; p];
    let mut beta_sums = vec![0.0; p];
    let (mut size_sum, mut size_sq_sum) = (0.0, 0.0);
    let (mut accepted, mut total) = (0usize, 0usize);
    let mut records: Vec<EvidenceRecord> = Vec::new();
    for r in per_chain {
        let (out, recs) = r?;
        accepted += out.accepted;
        total += out.total;
        records.extend(recs);
        for (visit, beta) in out.visits {
            for j in visit.model.indices() {
                pip_counts[j] += 1;
            }
            for (s, b) in beta_sums.iter_mut().zip(&beta) {
                *s += b;
            }
            let k = visit.model.size() as f64;
            size_sum += k;
            size_sq_sum += k * k;
            visited.push(visit);
        }
    }
    if config.share_memo {
        records = shared.records();
    } else {
        for r in shared.records() {
            records.push(r);
        }
    }
    records.sort_by_key(|r| r.model.bits());
    records.dedup_by_key(|r| r.model.bits());
    let n_kept = visited.len();
    Ok(ExplorationTrace {
        p,
        visited,
        pip_counts,
        beta_sums,
        size_sum,
        size_sq_sum,
        n_kept,
        seed: config.seed,
        config: config.clone(),
        acceptance_rate: accepted as f64 / total.max(1) as f64,
        records,
    })
}

/// Posterior probability of one model in a summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelProbability {
    pub model: ModelIndex,
    pub probability: f64,
    pub log_evidence: f64,
    pub log_prior: f64,
}

/// Model-averaged posterior quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub names: Vec<String>,
    pub pips: Vec<f64>,
    /// Model-averaged `E[β]`; excluded covariates contribute zero.
    pub beta_mean: Vec<f64>,
    /// Covariates with PIP strictly above one half.
    pub median_model: ModelIndex,
    /// Model with the largest log-evidence.
    pub best_model: ModelIndex,
    pub size_mean: f64,
    pub size_sd: f64,
    /// Models sorted by decreasing probability, ties by mask.
    pub models: Vec<ModelProbability>,
}

/// Median-probability model: include `j` iff `pip_j > 0.5` (ties excluded).
pub fn median_model(pips: &[f64]) -> Result<ModelIndex> {
    let idx: Vec<usize> = pips.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(j, _)| j).collect();
    ModelIndex::from_indices(pips.len(), &idx)
}

fn sort_models(models: &mut [ModelProbability]) {
    models.sort_by(|a, b| b.probability.total_cmp(&a.probability).then(a.model.bits().cmp(&b.model.bits())));
}

fn best_by_evidence(records: &[EvidenceRecord]) -> Option<ModelIndex> {
    records.iter().max_by(|a, b| a.log_evidence.total_cmp(&b.log_evidence).then(b.model.bits().cmp(&a.model.bits()))).map(|r| r.model)
}

fn default_names(p: usize, names: Option<&[String]>) -> Vec<String> {
    names.map(|n| n.to_vec()).unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect())
}

/// Probability-weighted summary of an enumeration.
pub fn summarize_enumeration(table: &EnumerationTable, names: Option<&[String]>) -> Result<PosteriorSummary> {
    if table.records.is_empty() {
        return Err(Error::Parameter("enumeration table is empty".into()));
    }
    let p = table.p;
    let mut pips = vec![0.0; p];
    let mut beta_mean = vec![0.0; p];
    let (mut m1, mut m2) = (0.0, 0.0);
    let mut models = Vec::with_capacity(table.records.len());
    for (r, &w) in table.records.iter().zip(&table.probabilities) {
        for j in r.model.indices() {
            pips[j] += w;
        }
        for (acc, b) in beta_mean.iter_mut().zip(&r.beta) {
            *acc += w * b;
        }
        let k = r.model.size() as f64;
        m1 += w * k;
        m2 += w * k * k;
        models.push(ModelProbability { model: r.model, probability: w, log_evidence: r.log_evidence, log_prior: r.log_prior });
    }
    sort_models(&mut models);
    Ok(PosteriorSummary {
        names: default_names(p, names),
        median_model: median_model(&pips)?,
        best_model: best_by_evidence(&table.records).expect("non-empty"),
        pips,
        beta_mean,
        size_mean: m1,
        size_sd: (m2 - m1 * m1).max(0.0).sqrt(),
        models,
    })
}

/// Visit-frequency summary of an exploration.
pub fn summarize_trace(trace: &ExplorationTrace, names: Option<&[String]>) -> Result<PosteriorSummary> {
    if trace.n_kept == 0 {
        return Err(Error::Parameter("exploration trace is empty".into()));
    }
    let p = trace.p;
    let n = trace.n_kept as f64;
    let pips: Vec<f64> = trace.pip_counts.iter().map(|&c| c as f64 / n).collect();
    let beta_mean: Vec<f64> = trace.beta_sums.iter().map(|&s| s / n).collect();
    let mean = trace.size_sum / n;
    let var = (trace.size_sq_sum / n - mean * mean).max(0.0);

    let mut counts: std::collections::BTreeMap<u64, (usize, f64, f64)> = Default::default();
    for v in &trace.visited {
        let e = counts.entry(v.model.bits()).or_insert((0, v.log_evidence, v.log_prior));
        e.0 += 1;
    }
    let mut models: Vec<ModelProbability> = counts
        .into_iter()
        .map(|(bits, (c, le, lp))| ModelProbability {
            model: ModelIndex::from_bits(bits, p).expect("visited mask"),
            probability: c as f64 / n,
            log_evidence: le,
            log_prior: lp,
        })
        .collect();
    sort_models(&mut models);
    let best = best_by_evidence(&trace.records).unwrap_or(models[0].model);
    Ok(PosteriorSummary {
        names: default_names(p, names),
        median_model: median_model(&pips)?,
        best_model: best,
        pips,
        beta_mean,
        size_mean: mean,
        size_sd: var.sqrt(),
        models,
    })
}

/// Total-variation distance between two model distributions keyed by mask.
pub fn total_variation(a: &[ModelProbability], b: &[ModelProbability]) -> f64 {
    use std::collections::HashMap;
    let mut diff: HashMap<u64, f64> = HashMap::new();
    for m in a {
        *diff.entry(m.model.bits()).or_default() += m.probability;
    }
    for m in b {
        *diff.entry(m.model.bits()).or_default() -= m.probability;
    }
    0.5 * diff.values().map(|v| v.abs()).sum::<f64>()
}
