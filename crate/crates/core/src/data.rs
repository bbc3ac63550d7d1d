//! Dataset preparation, shared cross-products and per-model factorizations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};
use crate::model_space::{ModelIndex, MAX_COVARIATES, RANK_TOL};
use crate::scalar::Real;

/// Outcome family, i.e. the link between latent `z_i` and observed `y_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Binary outcome, `y = 1{z > 0}`, latent variance fixed at one.
    Probit,
    /// Left-censored outcome, `y = max(y_L, z)`.
    Tobit,
    /// Counts from rounding, `y = floor(exp z)`.
    Star,
    /// Poisson log-normal counts, `y ~ Poisson(exp z)`.
    Pln,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Probit, Family::Tobit, Family::Star, Family::Pln];

    /// Whether σ² is fixed at one rather than estimated.
    pub fn sigma2_fixed(&self) -> bool {
        matches!(self, Family::Probit)
    }

    /// Families whose `y_i` is a deterministic function of `z_i`.
    pub fn is_deterministic_link(&self) -> bool {
        !matches!(self, Family::Pln)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Probit => "probit",
            Family::Tobit => "tobit",
            Family::Star => "star",
            Family::Pln => "pln",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "probit" => Ok(Family::Probit),
            "tobit" => Ok(Family::Tobit),
            "star" => Ok(Family::Star),
            "pln" => Ok(Family::Pln),
            other => Err(Error::Parameter(format!(
                "unknown family {other:?} (expected probit, tobit, star or pln)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PrepareOptions {
    /// Tobit censoring bound; defaults to the smallest observed outcome.
    pub y_lower: Option<f64>,
    /// Covariate names; defaults to `x1..xp`.
    pub names: Option<Vec<String>>,
}

/// Centered design matrix plus validated outcome vector.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    // column-major, n × p
    x: Vec<T>,
    y: Vec<T>,
    n: usize,
    p: usize,
    family: Family,
    y_lower: Option<T>,
    column_means: Vec<T>,
    names: Vec<String>,
}

fn is_integer(v: f64) -> bool {
    v.is_finite() && v.fract() == 0.0
}

/// Validates the outcome and centers the covariates.
///
/// Rejects constant columns and datasets for which the posterior does not
/// exist: probit needs both outcome values present, tobit at least two
/// uncensored observations, STAR at least two positive counts.
pub fn prepare_dataset<T: Real>(
    columns: Vec<Vec<T>>,
    y: Vec<T>,
    family: Family,
    options: &PrepareOptions,
) -> Result<Dataset<T>> {
    let n = y.len();
    let p = columns.len();
    if n < 3 {
        return Err(Error::Parameter(format!("need at least 3 observations, got {n}")));
    }
    if p > MAX_COVARIATES {
        return Err(Error::Parameter(format!(
            "{p} covariates exceed the supported maximum of {MAX_COVARIATES}"
        )));
    }
    let names = match &options.names {
        Some(names) if names.len() != p => {
            return Err(Error::Parameter(format!("{} names for {p} covariates", names.len())))
        }
        Some(names) => names.clone(),
        None => (1..=p).map(|j| format!("x{j}")).collect(),
    };
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("outcome {i} is not finite")));
    }

    let y_lower = validate_outcome(&y, family, options)?;

    let mut x = Vec::with_capacity(n * p);
    let mut column_means = Vec::with_capacity(p);
    let nf = T::from_usize_lossy(n);
    for (j, col) in columns.into_iter().enumerate() {
        if col.len() != n {
            return Err(Error::Parameter(format!(
                "column {} has {} rows, outcome has {n}",
                names[j],
                col.len()
            )));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("column {} has missing or non-finite values", names[j])));
        }
        let mean = col.iter().copied().sum::<T>() / nf;
        let scale = col.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let centered: Vec<T> = col.iter().map(|&v| v - mean).collect();
        let spread = centered.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if !(spread > scale * T::lit(1e-12)) {
            return Err(Error::Data(format!("column {} is constant", names[j])));
        }
        // second pass removes the residual mean left by rounding
        let resid = centered.iter().copied().sum::<T>() / nf;
        x.extend(centered.into_iter().map(|v| v - resid));
        column_means.push(mean + resid);
    }

    Ok(Dataset { x, y, n, p, family, y_lower, column_means, names })
}

fn validate_outcome<T: Real>(y: &[T], family: Family, options: &PrepareOptions) -> Result<Option<T>> {
    let yf: Vec<f64> = y.iter().map(|v| v.f64()).collect();
    match family {
        Family::Probit => {
            if let Some(i) = yf.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!("probit outcome {i} is {} (expected 0 or 1)", yf[i])));
            }
            if yf.iter().all(|&v| v == yf[0]) {
                return Err(Error::Existence(
                    "all outcomes equal: probit posterior requires both 0 and 1 outcomes".into(),
                ));
            }
            Ok(None)
        }
        Family::Tobit => {
            let min = yf.iter().copied().fold(f64::INFINITY, f64::min);
            let y_l = options.y_lower.unwrap_or(min);
            if !y_l.is_finite() {
                return Err(Error::Parameter("censoring bound must be finite".into()));
            }
            if let Some(i) = yf.iter().position(|&v| v < y_l) {
                return Err(Error::Data(format!(
                    "tobit outcome {i} = {} lies below the censoring bound {y_l}",
                    yf[i]
                )));
            }
            let uncensored = yf.iter().filter(|&&v| v > y_l).count();
            if uncensored < 2 {
                return Err(Error::Existence(format!(
                    "fewer than two uncensored observations ({uncensored}): tobit posterior does not exist"
                )));
            }
            Ok(Some(T::lit(y_l)))
        }
        Family::Star | Family::Pln => {
            if let Some(i) = yf.iter().position(|&v| !(is_integer(v) && v >= 0.0)) {
                return Err(Error::Data(format!(
                    "count outcome {i} = {} is not a non-negative integer",
                    yf[i]
                )));
            }
            let positive = yf.iter().filter(|&&v| v > 0.0).count();
            if family == Family::Star && positive < 2 {
                return Err(Error::Existence(format!(
                    "fewer than two positive counts ({positive}): STAR posterior does not exist"
                )));
            }
            if family == Family::Pln && positive == 0 {
                return Err(Error::Existence("all counts are zero: PLN intercept is unidentified".into()));
            }
            Ok(None)
        }
    }
}

impl<T: Real> Dataset<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    /// Tobit censoring bound.
    pub fn y_lower(&self) -> Option<T> {
        self.y_lower
    }

    pub fn column_means(&self) -> &[T] {
        &self.column_means
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Centered column `j`.
    pub fn column(&self, j: usize) -> &[T] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    /// Entry `(i, j)` of the centered design.
    #[inline]
    pub fn x(&self, i: usize, j: usize) -> T {
        self.x[j * self.n + i]
    }

    /// `X_colsᵀ v`.
    pub fn xt_dot(&self, cols: &[usize], v: &[T]) -> Vec<T> {
        cols.iter().map(|&j| linalg::dot(self.column(j), v)).collect()
    }

    /// Linear predictor `alpha + X_cols beta` for every observation.
    pub fn predictor(&self, cols: &[usize], alpha: T, beta: &[T]) -> Vec<T> {
        let mut eta = vec![alpha; self.n];
        for (&j, &b) in cols.iter().zip(beta) {
            for (e, &xij) in eta.iter_mut().zip(self.column(j)) {
                *e += b * xij;
            }
        }
        eta
    }

    /// Copy with a different outcome vector under the same design; revalidates.
    pub fn with_outcome(&self, y: Vec<T>, family: Family, options: &PrepareOptions) -> Result<Self> {
        if y.len() != self.n {
            return Err(Error::Parameter("outcome length mismatch".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("outcome is not finite".into()));
        }
        let y_lower = validate_outcome(&y, family, options)?;
        Ok(Self { y, family, y_lower, ..self.clone() })
    }
}

/// `G = XᵀX` for the centered design, computed once and shared by every model.
///
/// Because columns are centered, `Xᵀ1 = 0` and no intercept block is needed.
#[derive(Clone, Debug)]
pub struct CrossProducts<T> {
    n: usize,
    p: usize,
    g: Vec<T>,
}

pub fn cross_products<T: Real>(dataset: &Dataset<T>) -> CrossProducts<T> {
    let p = dataset.p();
    let mut g = vec![T::zero(); p * p];
    for i in 0..p {
        for j in i..p {
            let v = linalg::dot(dataset.column(i), dataset.column(j));
            g[i * p + j] = v;
            g[j * p + i] = v;
        }
    }
    CrossProducts { n: dataset.n(), p, g }
}

impl<T: Real> CrossProducts<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Full `p × p` matrix, row-major.
    pub fn matrix(&self) -> &[T] {
        &self.g
    }

    /// Block `G_k` for the covariates in `model`.
    pub fn select(&self, model: &ModelIndex) -> Vec<T> {
        let cols = model.indices();
        let k = cols.len();
        let mut out = Vec::with_capacity(k * k);
        for &i in &cols {
            for &j in &cols {
                out.push(self.g[i * self.p + j]);
            }
        }
        out
    }
}

/// Factorization of `G_k (+ ridge·I)` for one model.
#[derive(Clone, Debug)]
pub struct Submodel<T> {
    pub model: ModelIndex,
    pub cols: Vec<usize>,
    pub gk: Vec<T>,
    pub chol: Cholesky<T>,
    /// `G_k⁻¹`, row-major.
    pub ginv: Vec<T>,
    /// `ln |G_k|` of the (possibly jittered) block.
    pub log_det: T,
    /// Diagonal shift actually applied.
    pub ridge: T,
}

impl<T: Real> Submodel<T> {
    pub fn size(&self) -> usize {
        self.cols.len()
    }

    pub fn solve(&self, v: &[T]) -> Vec<T> {
        self.chol.solve(v)
    }
}

/// Factors the selected block of `G`.
///
/// A failed factorization is retried once with a jitter of
/// `1e-8·tr(G_k)/p_k` on the diagonal; a second failure is reported as
/// [`Error::Singular`].
pub fn submodel_chol<T: Real>(xp: &CrossProducts<T>, model: &ModelIndex, ridge: T) -> Result<Submodel<T>> {
    let cols = model.indices();
    let k = cols.len();
    let base = xp.select(model);
    let attempt = |shift: T| {
        let mut gk = base.clone();
        for i in 0..k {
            gk[i * k + i] += shift;
        }
        Cholesky::factor(&gk, k, T::lit(RANK_TOL)).map(|c| (gk, c))
    };
    let (gk, chol, used) = match attempt(ridge) {
        Ok((gk, c)) => (gk, c, ridge),
        Err(_) => {
            let trace: T = (0..k).map(|i| base[i * k + i]).sum();
            let jitter = ridge + T::lit(1e-8) * trace / T::from_usize_lossy(k.max(1));
            match attempt(jitter) {
                Ok((gk, c)) => (gk, c, jitter),
                Err(_) => return Err(Error::Singular(model.to_bitstring())),
            }
        }
    };
    let log_det = chol.log_det();
    let ginv = chol.inverse();
    Ok(Submodel { model: *model, cols, gk, chol, ginv, log_det, ridge: used })
}

/// Raw table read from CSV: covariate columns (uncentered) and the outcome.
#[derive(Clone, Debug)]
pub struct RawTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub outcome_name: String,
    pub y: Vec<f64>,
}

/// Reads a headed CSV; `outcome` names the outcome column, every other
/// column is a numeric covariate.
pub fn read_csv_table(path: &Path, outcome: &str) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let y_col = headers
        .iter()
        .position(|h| h == outcome)
        .ok_or_else(|| Error::Parameter(format!("outcome column {outcome:?} not found in header")))?;
    let names: Vec<String> = headers.iter().enumerate().filter(|(i, _)| *i != y_col).map(|(_, h)| h.clone()).collect();
    let mut columns = vec![Vec::new(); names.len()];
    let mut y = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!("row {} has {} fields, expected {}", row + 1, record.len(), headers.len())));
        }
        let mut c = 0;
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Data(format!("row {}, column {:?}: {field:?} is not a number", row + 1, headers[i]))
            })?;
            if i == y_col {
                y.push(v);
            } else {
                columns[c].push(v);
                c += 1;
            }
        }
    }
    Ok(RawTable { names, columns, outcome_name: outcome.to_string(), y })
}

/// Reads a CSV and prepares it for `family`.
pub fn read_csv(path: &Path, outcome: &str, family: Family, y_lower: Option<f64>) -> Result<Dataset<f64>> {
    let table = read_csv_table(path, outcome)?;
    let opts = PrepareOptions { y_lower, names: Some(table.names) };
    prepare_dataset(table.columns, table.y, family, &opts)
}

/// Writes covariates and outcome as a headed CSV (outcome last).
pub fn write_csv(path: &Path, table: &RawTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = table.names.clone();
    header.push(table.outcome_name.clone());
    w.write_record(&header)?;
    for i in 0..table.y.len() {
        let mut row: Vec<String> = table.columns.iter().map(|c| format_f64(c[i])).collect();
        row.push(format_f64(table.y[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}
