//! Run manifests, evidence and trace tables, and summary reports.
//!
//! Every floating-point value in a machine-readable file is written with 17
//! significant digits so that reading it back reproduces the same `f64`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{format_f64, RawTable};
use crate::error::{Error, Result};
use crate::evidence::{Criterion, EvidenceRecord, Method};
use crate::explorer::{ChainConfig, ExplorationTrace, PosteriorSummary, Visit};
use crate::model_space::ModelIndex;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVIDENCE_FILE: &str = "evidence.csv";
pub const TRACE_FILE: &str = "trace.csv";

/// Row/column counts and a SHA-256 over names and values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

pub fn fingerprint(table: &RawTable) -> DatasetFingerprint {
    let mut h = Sha256::new();
    h.update(table.outcome_name.as_bytes());
    for name in &table.names {
        h.update([0u8]);
        h.update(name.as_bytes());
    }
    for v in &table.y {
        h.update(v.to_le_bytes());
    }
    for col in &table.columns {
        for v in col {
            h.update(v.to_le_bytes());
        }
    }
    let digest = h.finalize();
    DatasetFingerprint {
        rows: table.y.len(),
        cols: table.columns.len(),
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    }
}

/// Named wall-clock phases of one command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    pub entries: Vec<(String, u64)>,
}

impl Phases {
    /// Runs `f` and records its wall time under `name`.
    pub fn time<R>(&mut self, name: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let out = f();
        self.entries.push((name.to_string(), t.elapsed().as_nanos() as u64));
        out
    }

    pub fn total_ns(&self) -> u64 {
        self.entries.iter().map(|(_, ns)| ns).sum()
    }
}

/// Everything needed to reproduce one CLI run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub wall_time_ns: u64,
    pub phases: Vec<(String, u64)>,
    /// Totals not tied to a phase, e.g. summed per-model fit time.
    pub counters: BTreeMap<String, u64>,
    pub dataset: Option<DatasetFingerprint>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Builder that stamps start and end times.
pub struct ManifestBuilder {
    command: String,
    config: BTreeMap<String, String>,
    seeds: Vec<u64>,
    started_at: f64,
    start: Instant,
    counters: BTreeMap<String, u64>,
    dataset: Option<DatasetFingerprint>,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: BTreeMap<String, String>) -> Self {
        Self {
            command: command.to_string(),
            config,
            seeds: Vec::new(),
            started_at: unix_now(),
            start: Instant::now(),
            counters: BTreeMap::new(),
            dataset: None,
        }
    }

    pub fn seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn counter(&mut self, name: &str, value: u64) {
        self.counters.insert(name.to_string(), value);
    }

    pub fn dataset(mut self, fp: DatasetFingerprint) -> Self {
        self.dataset = Some(fp);
        self
    }

    pub fn finish(self, phases: &Phases) -> RunManifest {
        RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seeds: self.seeds,
            started_at: self.started_at,
            finished_at: unix_now(),
            wall_time_ns: self.start.elapsed().as_nanos() as u64,
            phases: phases.entries.clone(),
            counters: self.counters,
            dataset: self.dataset,
        }
    }
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_FILE);
    let file = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(file, manifest)?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_reader(File::open(dir.join(MANIFEST_FILE))?)?)
}

/// Evidence table: the eight fixed columns
/// `mask, p_k, log_evidence, log_prior, method, criterion, iters, wall_time_ns`
/// followed by `converged, mu_alpha, sigma2` and one `beta_<name>` per
/// covariate. The mask is the bit string, covariate 1 first.
pub fn write_evidence_csv(path: &Path, records: &[EvidenceRecord], names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "mask", "p_k", "log_evidence", "log_prior", "method", "criterion", "iters", "wall_time_ns", "converged",
        "mu_alpha", "sigma2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(names.iter().map(|n| format!("beta_{n}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.model.to_bitstring(),
            r.model.size().to_string(),
            format_f64(r.log_evidence),
            format_f64(r.log_prior),
            r.method.name().to_string(),
            r.criterion.name().to_string(),
            r.iters.to_string(),
            r.wall_time_ns.to_string(),
            r.converged.to_string(),
            format_f64(r.mu_alpha),
            format_f64(r.sigma2),
        ];
        row.extend(r.beta.iter().map(|&b| format_f64(b)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::Data(format!("missing {what} column")))?
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("unparsable {what} value")))
}

fn parse_mask(s: &str) -> Result<ModelIndex> {
    let p = s.len();
    let mut idx = Vec::new();
    for (j, c) in s.chars().enumerate() {
        match c {
            '1' => idx.push(j),
            '0' => {}
            _ => return Err(Error::Data(format!("bad mask `{s}`"))),
        }
    }
    ModelIndex::from_indices(p, &idx)
}

/// Reads a table written by [`write_evidence_csv`]; returns covariate names
/// and records.
pub fn read_evidence_csv(path: &Path) -> Result<(Vec<String>, Vec<EvidenceRecord>)> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let names: Vec<String> =
        headers.iter().filter_map(|h| h.strip_prefix("beta_").map(str::to_string)).collect();
    let first_beta = headers.iter().position(|h| h.starts_with("beta_")).unwrap_or(headers.len());
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let model = parse_mask(row.get(0).unwrap_or(""))?;
        if model.p_total() != names.len() {
            return Err(Error::Data("mask length does not match the coefficient columns".into()));
        }
        out.push(EvidenceRecord {
            model,
            log_evidence: parse(row.get(2), "log_evidence")?,
            log_prior: parse(row.get(3), "log_prior")?,
            method: parse::<Method>(row.get(4), "method")?,
            criterion: parse::<Criterion>(row.get(5), "criterion")?,
            iters: parse(row.get(6), "iters")?,
            wall_time_ns: parse(row.get(7), "wall_time_ns")?,
            converged: parse(row.get(8), "converged")?,
            mu_alpha: parse(row.get(9), "mu_alpha")?,
            sigma2: parse(row.get(10), "sigma2")?,
            beta: (first_beta..headers.len()).map(|i| parse(row.get(i), "beta")).collect::<Result<_>>()?,
        });
    }
    Ok((names, out))
}

/// Trace table: `chain, iteration, mask, log_evidence, log_prior, accepted`.
pub fn write_trace_csv(path: &Path, trace: &ExplorationTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["chain", "iteration", "mask", "log_evidence", "log_prior", "accepted"])?;
    for v in &trace.visited {
        w.write_record([
            v.chain.to_string(),
            v.iteration.to_string(),
            v.model.to_bitstring(),
            format_f64(v.log_evidence),
            format_f64(v.log_prior),
            v.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<Visit>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        out.push(Visit {
            chain: parse(row.get(0), "chain")?,
            iteration: parse(row.get(1), "iteration")?,
            model: parse_mask(row.get(2).unwrap_or(""))?,
            log_evidence: parse(row.get(3), "log_evidence")?,
            log_prior: parse(row.get(4), "log_prior")?,
            accepted: parse(row.get(5), "accepted")?,
        });
    }
    Ok(out)
}

/// Rebuilds trace accumulators from visits and the evidence records of the
/// visited models.
pub fn trace_from_parts(p: usize, visited: Vec<Visit>, records: Vec<EvidenceRecord>, config: ChainConfig) -> Result<ExplorationTrace> {
    let by_mask: BTreeMap<u64, &EvidenceRecord> = records.iter().map(|r| (r.model.bits(), r)).collect();
    let mut pip_counts = vec![0u64; p];
    let mut beta_sums = vec![0.0; p];
    let (mut size_sum, mut size_sq_sum) = (0.0, 0.0);
    let mut accepted = 0usize;
    for v in &visited {
        let r = by_mask
            .get(&v.model.bits())
            .ok_or_else(|| Error::Data(format!("no evidence record for visited model {}", v.model.to_bitstring())))?;
        for j in v.model.indices() {
            pip_counts[j] += 1;
        }
        for (s, b) in beta_sums.iter_mut().zip(&r.beta) {
            *s += b;
        }
        let k = v.model.size() as f64;
        size_sum += k;
        size_sq_sum += k * k;
        accepted += usize::from(v.accepted);
    }
    let n_kept = visited.len();
    Ok(ExplorationTrace {
        p,
        pip_counts,
        beta_sums,
        size_sum,
        size_sq_sum,
        n_kept,
        seed: config.seed,
        config,
        acceptance_rate: accepted as f64 / n_kept.max(1) as f64,
        records,
        visited,
    })
}

/// Output flavour of [`emit_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "text" | "text-table" | "table" => Ok(ReportFormat::Text),
            other => Err(Error::Parameter(format!("unknown report format `{other}`"))),
        }
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn write(&self, path: &Path, format: ReportFormat) -> Result<()> {
        match format {
            ReportFormat::Csv => {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(&self.header)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                w.flush()?;
            }
            ReportFormat::Text => {
                let widths: Vec<usize> = (0..self.header.len())
                    .map(|c| self.rows.iter().map(|r| r[c].len()).chain([self.header[c].len()]).max().unwrap_or(0))
                    .collect();
                let mut w = BufWriter::new(File::create(path)?);
                let line = |cells: &[String]| -> String {
                    cells.iter().zip(&widths).map(|(c, &wd)| format!("{c:>wd$}")).collect::<Vec<_>>().join("  ")
                };
                writeln!(w, "{}", line(&self.header))?;
                writeln!(w, "{}", widths.iter().map(|&wd| "-".repeat(wd)).collect::<Vec<_>>().join("  "))?;
                for r in &self.rows {
                    writeln!(w, "{}", line(r))?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

/// Report file names, in the order written.
pub const REPORT_FILES: [&str; 4] = ["pip", "beta", "top_models", "size"];

/// Writes the PIP table, the averaged-β table, the `top_k` models by
/// log-evidence and the model-size posterior into `dir`.
///
/// Columns:
/// - `pip`: `covariate, pip`
/// - `beta`: `covariate, beta_mean`
/// - `top_models`: `rank, mask, p_k, log_evidence, log_prior, probability`
/// - `size`: `size, probability`, then `mean` and `sd` rows
pub fn emit_report(dir: &Path, summary: &PosteriorSummary, format: ReportFormat, top_k: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let ext = match format {
        ReportFormat::Csv => "csv",
        ReportFormat::Text => "txt",
    };
    let mut pip = Table::new(&["covariate", "pip"]);
    let mut beta = Table::new(&["covariate", "beta_mean"]);
    for (j, name) in summary.names.iter().enumerate() {
        pip.rows.push(vec![name.clone(), format_f64(summary.pips[j])]);
        beta.rows.push(vec![name.clone(), format_f64(summary.beta_mean[j])]);
    }

    let mut ranked = summary.models.clone();
    ranked.sort_by(|a, b| b.log_evidence.total_cmp(&a.log_evidence).then(a.model.bits().cmp(&b.model.bits())));
    let mut top = Table::new(&["rank", "mask", "p_k", "log_evidence", "log_prior", "probability"]);
    for (i, m) in ranked.iter().take(top_k).enumerate() {
        top.rows.push(vec![
            (i + 1).to_string(),
            m.model.to_bitstring(),
            m.model.size().to_string(),
            format_f64(m.log_evidence),
            format_f64(m.log_prior),
            format_f64(m.probability),
        ]);
    }

    let p = summary.names.len();
    let mut by_size = vec![0.0; p + 1];
    for m in &summary.models {
        by_size[m.model.size()] += m.probability;
    }
    let mut size = Table::new(&["size", "probability"]);
    for (k, w) in by_size.iter().enumerate() {
        size.rows.push(vec![k.to_string(), format_f64(*w)]);
    }
    size.rows.push(vec!["mean".into(), format_f64(summary.size_mean)]);
    size.rows.push(vec!["sd".into(), format_f64(summary.size_sd)]);

    let mut paths = Vec::new();
    for (name, table) in REPORT_FILES.iter().zip([&pip, &beta, &top, &size]) {
        let path = dir.join(format!("{name}.{ext}"));
        table.write(&path, format)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads a `pip.csv` written by [`emit_report`].
pub fn read_pip_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rd = csv::Reader::from_path(path)?;
    let (mut names, mut pips) = (Vec::new(), Vec::new());
    for row in rd.records() {
        let row = row?;
        names.push(row.get(0).unwrap_or("").to_string());
        pips.push(parse(row.get(1), "pip")?);
    }
    Ok((names, pips))
}

/// Truth manifest written next to simulated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub design: crate::sim::SimDesign,
    pub seed: u64,
    pub truth_mask: String,
    pub beta_true: Vec<f64>,
}
