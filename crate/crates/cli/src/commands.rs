use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use latent_bma::cavi::{run_cavi_with, state_elbo, FitConfig};
use latent_bma::data::{cross_products, prepare_dataset, read_csv_table, submodel_chol, write_csv, PrepareOptions, RawTable};
use latent_bma::evidence::{build_null_cache, run_avb, state_log_vbc, Evaluator, EvidenceMemo};
use latent_bma::explorer::{enumerate, explore, summarize_enumeration, summarize_trace, ChainConfig, EnumerationTable};
use latent_bma::report::{
    emit_report, fingerprint, read_evidence_csv, read_manifest, read_trace_csv, trace_from_parts, write_evidence_csv,
    write_manifest, write_trace_csv, ManifestBuilder, Phases, ReportFormat, TruthManifest, EVIDENCE_FILE, TRACE_FILE,
};
use latent_bma::sim::{default_sigma2, simulate, SimDesign};
use latent_bma::{Dataset, Error, Method, ModelIndex, ModelPriorSpec, Result};

use crate::args::{Command, DataArgs, ExploreArgs, FitArgs, ModelArgs, ReportArgs, SearchArgs, SimulateArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Enumerate(a) => enumerate_cmd(a),
        Command::Explore(a) => explore_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

type Echo = BTreeMap<String, String>;

fn echo_data(e: &mut Echo, d: &DataArgs) {
    e.insert("data".into(), d.data.display().to_string());
    e.insert("outcome".into(), d.outcome.clone());
    e.insert("family".into(), d.family.to_string());
    if let Some(y) = d.y_lower {
        e.insert("y-lower".into(), y.to_string());
    }
}

fn echo_model(e: &mut Echo, m: &ModelArgs) {
    e.insert("method".into(), m.method.to_string());
    e.insert("criterion".into(), m.criterion.to_string());
    if let Some(g) = m.g {
        e.insert("g".into(), g.to_string());
    }
    if let Some(p0) = m.prior_mean_size {
        e.insert("prior-mean-size".into(), p0.to_string());
    }
    e.insert("tol".into(), m.tol.to_string());
    e.insert("max-iter".into(), m.max_iter.to_string());
    e.insert("accelerate".into(), (!m.no_accelerate).to_string());
}

fn load(d: &DataArgs) -> Result<(RawTable, Dataset)> {
    let table = read_csv_table(&d.data, &d.outcome)?;
    let options = PrepareOptions { y_lower: d.y_lower, names: Some(table.names.clone()) };
    let dataset = prepare_dataset(table.columns.clone(), table.y.clone(), d.family, &options)?;
    Ok((table, dataset))
}

fn fit_config(m: &ModelArgs) -> Result<FitConfig> {
    let cfg = FitConfig { g: m.g, tol: m.tol, max_iter: m.max_iter, accelerate: !m.no_accelerate, ..FitConfig::default() };
    cfg.validate()?;
    Ok(cfg)
}

fn prior(m: &ModelArgs, p: usize) -> Result<ModelPriorSpec> {
    if p == 0 {
        return ModelPriorSpec::new(1.0, 1.0);
    }
    ModelPriorSpec::with_expected_size(p, m.prior_mean_size.unwrap_or(p as f64 / 2.0))
}

fn parse_mask(mask: &str, p: usize) -> Result<ModelIndex> {
    if mask.len() != p {
        return Err(Error::Parameter(format!("mask `{mask}` has {} characters for {p} covariates", mask.len())));
    }
    let mut idx = Vec::new();
    for (j, c) in mask.chars().enumerate() {
        match c {
            '1' => idx.push(j),
            '0' => {}
            _ => return Err(Error::Parameter(format!("mask `{mask}` must contain only 0 and 1"))),
        }
    }
    ModelIndex::from_indices(p, &idx)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

#[derive(Serialize)]
struct FitOutput {
    mask: String,
    family: String,
    method: String,
    iterations: usize,
    converged: bool,
    mu_alpha: f64,
    omega_alpha: f64,
    mu_beta: BTreeMap<String, f64>,
    omega_beta: Vec<f64>,
    a: f64,
    b: f64,
    sigma2: Option<f64>,
    elbo: f64,
    log_vbc: f64,
}

fn fit(a: FitArgs) -> Result<()> {
    let mut echo = Echo::new();
    echo_data(&mut echo, &a.data);
    echo_model(&mut echo, &a.model);
    if let Some(m) = &a.mask {
        echo.insert("mask".into(), m.clone());
    }
    let mut phases = Phases::default();
    let mut manifest = ManifestBuilder::start("fit", echo);
    let (table, dataset) = phases.time("load", || load(&a.data))?;
    manifest = manifest.dataset(fingerprint(&table));
    let config = fit_config(&a.model)?;
    let p = dataset.p();
    let model = match &a.mask {
        Some(m) => parse_mask(m, p)?,
        None => ModelIndex::full(p)?,
    };
    let xp = phases.time("cross_products", || cross_products(&dataset));
    let sub = submodel_chol(&xp, &model, config.ridge)?;
    let g = config.g_for(dataset.n());
    let state = match a.model.method {
        Method::Vb => phases.time("fit", || run_cavi_with(&dataset, &sub, &config, None))?,
        Method::Avb => {
            let cache = phases.time("null_cache", || build_null_cache(&dataset, &xp, &config))?;
            phases.time("fit", || run_avb(&cache, &sub, &config, g, None))?
        }
    };
    let (elbo, log_vbc) = phases.time("criteria", || -> Result<(f64, f64)> {
        Ok((state_elbo(&state, &sub, g)?, state_log_vbc(&state, &sub, g)?))
    })?;
    let names = dataset.names();
    let out = FitOutput {
        mask: model.to_bitstring(),
        family: dataset.family().to_string(),
        method: a.model.method.to_string(),
        iterations: state.iterations,
        converged: state.converged,
        mu_alpha: state.theta.mu_alpha,
        omega_alpha: state.theta.omega_alpha,
        mu_beta: model.indices().iter().zip(&state.theta.mu_beta).map(|(&j, &b)| (names[j].clone(), b)).collect(),
        omega_beta: state.theta.omega_beta.clone(),
        a: state.theta.a,
        b: state.theta.b,
        sigma2: (!state.sigma2_fixed).then(|| state.sigma2_hat()).transpose()?,
        elbo,
        log_vbc,
    };
    fs::create_dir_all(&a.out_dir)?;
    phases.time("write", || write_json(&a.out_dir.join("fit.json"), &out))?;
    write_manifest(&a.out_dir, &manifest.finish(&phases))?;
    Ok(())
}

fn enumerate_cmd(a: SearchArgs) -> Result<()> {
    let mut echo = Echo::new();
    echo_data(&mut echo, &a.data);
    echo_model(&mut echo, &a.model);
    echo.insert("cap".into(), a.cap.to_string());
    let mut phases = Phases::default();
    let mut manifest = ManifestBuilder::start("enumerate", echo);
    let (table, dataset) = phases.time("load", || load(&a.data))?;
    manifest = manifest.dataset(fingerprint(&table));
    let config = fit_config(&a.model)?;
    let p = dataset.p();
    if p > a.cap {
        return Err(Error::Parameter(format!("p = {p} exceeds the enumeration cap of {}; use explore", a.cap)));
    }
    let xp = phases.time("cross_products", || cross_products(&dataset));
    let spec = prior(&a.model, p)?;
    let evaluator = phases.time("null_cache", || {
        Evaluator::new(&dataset, &xp, &config, spec, a.model.method, a.model.criterion)
    })?;
    let result: EnumerationTable = phases.time("model_fits", || enumerate(&evaluator, a.cap))?;
    manifest.counter("models_evaluated", result.records.len() as u64);
    manifest.counter("model_fit_total_ns", result.records.iter().map(|r| r.wall_time_ns).sum());
    fs::create_dir_all(&a.out_dir)?;
    phases.time("write", || -> Result<()> {
        write_evidence_csv(&a.out_dir.join(EVIDENCE_FILE), &result.records, dataset.names())?;
        let summary = summarize_enumeration(&result, Some(dataset.names()))?;
        emit_report(&a.out_dir, &summary, ReportFormat::Csv, 20)?;
        Ok(())
    })?;
    write_manifest(&a.out_dir, &manifest.finish(&phases))?;
    Ok(())
}

fn explore_cmd(a: ExploreArgs) -> Result<()> {
    let mut echo = Echo::new();
    echo_data(&mut echo, &a.data);
    echo_model(&mut echo, &a.model);
    for (k, v) in [
        ("keep", a.keep.to_string()),
        ("burnin", a.burnin.to_string()),
        ("chains", a.chains.to_string()),
        ("seed", a.seed.to_string()),
        ("share-memo", a.share_memo.to_string()),
    ] {
        echo.insert(k.into(), v);
    }
    let mut phases = Phases::default();
    let mut manifest = ManifestBuilder::start("explore", echo).seeds(vec![a.seed]);
    let (table, dataset) = phases.time("load", || load(&a.data))?;
    manifest = manifest.dataset(fingerprint(&table));
    let config = fit_config(&a.model)?;
    let xp = phases.time("cross_products", || cross_products(&dataset));
    let spec = prior(&a.model, dataset.p())?;
    let evaluator = phases.time("null_cache", || {
        Evaluator::new(&dataset, &xp, &config, spec, a.model.method, a.model.criterion)
    })?
    .with_memo(Arc::new(EvidenceMemo::default()));
    let chain = ChainConfig {
        n_keep: a.keep,
        burn_in: a.burnin,
        seed: a.seed,
        chains: a.chains,
        initial: None,
        share_memo: a.share_memo,
    };
    let trace = phases.time("model_search", || explore(&evaluator, &chain))?;
    manifest.counter("models_evaluated", trace.records.len() as u64);
    manifest.counter("model_fit_total_ns", trace.records.iter().map(|r| r.wall_time_ns).sum());
    fs::create_dir_all(&a.out_dir)?;
    phases.time("write", || -> Result<()> {
        write_trace_csv(&a.out_dir.join(TRACE_FILE), &trace)?;
        write_evidence_csv(&a.out_dir.join(EVIDENCE_FILE), &trace.records, dataset.names())?;
        let summary = summarize_trace(&trace, Some(dataset.names()))?;
        emit_report(&a.out_dir, &summary, ReportFormat::Csv, 20)?;
        Ok(())
    })?;
    write_manifest(&a.out_dir, &manifest.finish(&phases))?;
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let mut echo = Echo::new();
    for (k, v) in [
        ("family", a.family.to_string()),
        ("n", a.n.to_string()),
        ("p", a.p.to_string()),
        ("preset", format!("{:?}", a.preset).to_lowercase()),
        ("rho", a.rho.to_string()),
        ("alpha", a.alpha.to_string()),
        ("y-lower", a.y_lower.to_string()),
        ("seed", a.seed.to_string()),
    ] {
        echo.insert(k.into(), v);
    }
    if let Some(s) = a.sigma2 {
        echo.insert("sigma2".into(), s.to_string());
    }
    let mut phases = Phases::default();
    let mut manifest = ManifestBuilder::start("simulate", echo).seeds(vec![a.seed]);
    let design = SimDesign {
        family: a.family,
        n: a.n,
        p: a.p,
        rho: a.rho,
        beta_true: a.preset.beta(a.p),
        alpha_true: a.alpha,
        sigma2_true: a.sigma2.unwrap_or_else(|| default_sigma2(a.family)),
        y_lower: a.y_lower,
        seed: a.seed,
    };
    let sim = phases.time("simulate", || simulate::<f64>(&design))?;
    manifest = manifest.dataset(fingerprint(&sim.table));
    fs::create_dir_all(&a.out_dir)?;
    phases.time("write", || -> Result<()> {
        write_csv(&a.out_dir.join("data.csv"), &sim.table)?;
        let truth = TruthManifest {
            design: design.clone(),
            seed: sim.seed,
            truth_mask: sim.truth.to_bitstring(),
            beta_true: design.beta_true.clone(),
        };
        write_json(&a.out_dir.join("truth.json"), &truth)
    })?;
    write_manifest(&a.out_dir, &manifest.finish(&phases))?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let out_dir = a.out_dir.clone().unwrap_or_else(|| a.from.join("report"));
    if out_dir == a.from {
        return Err(Error::Parameter("--out-dir must differ from --from, which already holds a manifest".into()));
    }
    let mut echo = Echo::new();
    echo.insert("from".into(), a.from.display().to_string());
    echo.insert("format".into(), format!("{:?}", a.format).to_lowercase());
    echo.insert("top-k".into(), a.top_k.to_string());
    let mut phases = Phases::default();
    let mut manifest = ManifestBuilder::start("report", echo);
    let source = read_manifest(&a.from)?;
    if let Some(fp) = source.dataset.clone() {
        manifest = manifest.dataset(fp);
    }
    let summary = phases.time("summarize", || -> Result<_> {
        let (names, records) = read_evidence_csv(&a.from.join(EVIDENCE_FILE))?;
        let p = names.len();
        match source.command.as_str() {
            "enumerate" => {
                let logw: Vec<f64> = records.iter().map(|r| r.log_posterior()).collect();
                let table = EnumerationTable {
                    p,
                    probabilities: latent_bma::explorer::normalize_log_weights(&logw),
                    records,
                    inadmissible: Vec::new(),
                };
                summarize_enumeration(&table, Some(&names))
            }
            "explore" => {
                let visits = read_trace_csv(&a.from.join(TRACE_FILE))?;
                fn cfg<T: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str) -> Option<T> {
                    m.get(k).and_then(|v| v.parse().ok())
                }
                let c = &source.config;
                let chain = ChainConfig {
                    n_keep: cfg(c, "keep").unwrap_or(0),
                    burn_in: cfg(c, "burnin").unwrap_or(0),
                    seed: cfg(c, "seed").unwrap_or(0),
                    chains: cfg(c, "chains").unwrap_or(1),
                    initial: None,
                    share_memo: source.config.get("share-memo").is_some_and(|v| v == "true"),
                };
                let trace = trace_from_parts(p, visits, records, chain)?;
                summarize_trace(&trace, Some(&names))
            }
            other => Err(Error::Parameter(format!("cannot report on a `{other}` run"))),
        }
    })?;
    phases.time("write", || emit_report(&out_dir, &summary, a.format, a.top_k))?;
    write_manifest(&out_dir, &manifest.finish(&phases))?;
    Ok(())
}
