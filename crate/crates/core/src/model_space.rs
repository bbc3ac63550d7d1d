//! Models as covariate-inclusion masks, the beta-binomial model prior and
//! add–delete–swap proposals.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::CrossProducts;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;
use crate::special::ln_gamma;

/// Largest number of candidate covariates a mask can address.
///
/// Masks are single 64-bit words so that evidence caches hash in O(1). Larger
/// candidate sets would need a multi-word mask behind the same interface.
pub const MAX_COVARIATES: usize = 64;

/// Relative pivot threshold below which a selected column counts as dependent.
pub const RANK_TOL: f64 = 1e-10;

/// One model: the set of included covariates out of `p` candidates.
///
/// The intercept is implicit and never part of the mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelIndex {
    mask: u64,
    p: u8,
}

impl ModelIndex {
    pub fn null(p: usize) -> Result<Self> {
        Self::from_bits(0, p)
    }

    pub fn full(p: usize) -> Result<Self> {
        let mask = if p == 64 { u64::MAX } else { (1u64 << p) - 1 };
        Self::from_bits(mask, p)
    }

    pub fn from_bits(mask: u64, p: usize) -> Result<Self> {
        if p > MAX_COVARIATES {
            return Err(Error::Parameter(format!(
                "{p} candidate covariates exceed the {MAX_COVARIATES}-bit mask"
            )));
        }
        if p < 64 && mask >> p != 0 {
            return Err(Error::Parameter(format!("mask {mask:#x} has bits beyond p = {p}")));
        }
        Ok(Self { mask, p: p as u8 })
    }

    pub fn from_indices(p: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &j in indices {
            if j >= p {
                return Err(Error::Parameter(format!("covariate index {j} out of range (p = {p})")));
            }
            if mask & (1 << j) != 0 {
                return Err(Error::Parameter(format!("duplicate covariate index {j}")));
            }
            mask |= 1 << j;
        }
        Self::from_bits(mask, p)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.mask
    }

    /// Number of candidate covariates.
    #[inline]
    pub fn p_total(&self) -> usize {
        self.p as usize
    }

    /// Number of included covariates.
    #[inline]
    pub fn size(&self) -> usize {
        self.mask.count_ones() as usize
    }

    #[inline]
    pub fn contains(&self, j: usize) -> bool {
        j < self.p_total() && self.mask & (1 << j) != 0
    }

    pub fn is_null(&self) -> bool {
        self.mask == 0
    }

    /// Included covariate indices in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.p_total()).filter(|&j| self.contains(j)).collect()
    }

    /// Excluded covariate indices in increasing order.
    pub fn excluded(&self) -> Vec<usize> {
        (0..self.p_total()).filter(|&j| !self.contains(j)).collect()
    }

    pub fn with(&self, j: usize) -> Self {
        debug_assert!(j < self.p_total());
        Self { mask: self.mask | (1 << j), p: self.p }
    }

    pub fn without(&self, j: usize) -> Self {
        Self { mask: self.mask & !(1 << j), p: self.p }
    }

    /// Canonical `'0'/'1'` string of length p, covariate 0 leftmost.
    pub fn to_bitstring(&self) -> String {
        (0..self.p_total()).map(|j| if self.contains(j) { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for ModelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

impl fmt::Debug for ModelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelIndex({})", self.to_bitstring())
    }
}

impl FromStr for ModelIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut mask = 0u64;
        for (j, c) in s.chars().enumerate() {
            match c {
                '1' if j < 64 => mask |= 1 << j,
                '0' => {}
                _ => return Err(Error::Parameter(format!("invalid model mask string {s:?}"))),
            }
        }
        Self::from_bits(mask, s.chars().count())
    }
}

/// Beta(u, v) hyperprior on the common inclusion probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPriorSpec {
    pub u: f64,
    pub v: f64,
}

impl ModelPriorSpec {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(u > 0.0 && v > 0.0 && u.is_finite() && v.is_finite()) {
            return Err(Error::Parameter(format!(
                "beta-binomial parameters must be positive, got u = {u}, v = {v}"
            )));
        }
        Ok(Self { u, v })
    }

    /// `u = 1`, `v = (p − p0)/p0` so that the prior mean model size is `p0`.
    pub fn with_expected_size(p: usize, p0: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < p as f64) {
            return Err(Error::Parameter(format!(
                "prior mean model size must lie in (0, {p}), got {p0}"
            )));
        }
        Self::new(1.0, (p as f64 - p0) / p0)
    }

    /// Prior mean model size `p·u/(u+v)`.
    pub fn expected_size(&self, p: usize) -> f64 {
        p as f64 * self.u / (self.u + self.v)
    }
}

/// Log beta-binomial prior probability of a model; depends only on its size.
pub fn log_model_prior(model: &ModelIndex, spec: &ModelPriorSpec) -> f64 {
    let (u, v) = (spec.u, spec.v);
    let p = model.p_total() as f64;
    let pk = model.size() as f64;
    ln_gamma(u + v) - ln_gamma(u) - ln_gamma(v) + ln_gamma(u + pk) + ln_gamma(v + p - pk)
        - ln_gamma(u + v + p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Add,
    Delete,
    Swap,
}

/// A proposed move with forward and reverse log proposal probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub target: ModelIndex,
    pub log_fwd: f64,
    pub log_rev: f64,
    pub move_kind: MoveKind,
}

fn feasible_kinds(size: usize, p: usize) -> usize {
    let mut k = 0;
    if size < p {
        k += 1; // add
    }
    if size > 0 {
        k += 1; // delete
    }
    if size > 0 && size < p {
        k += 1; // swap
    }
    k
}

/// Log probability of proposing `kind` followed by a particular covariate choice.
///
/// Kinds are picked uniformly among those feasible from a model of size
/// `size`; covariates uniformly within the kind.
pub fn log_move_probability(kind: MoveKind, size: usize, p: usize) -> f64 {
    let kinds = feasible_kinds(size, p) as f64;
    let choices = match kind {
        MoveKind::Add => (p - size) as f64,
        MoveKind::Delete => size as f64,
        MoveKind::Swap => (size * (p - size)) as f64,
    };
    -(kinds.ln()) - choices.ln()
}

fn reverse_kind(kind: MoveKind) -> MoveKind {
    match kind {
        MoveKind::Add => MoveKind::Delete,
        MoveKind::Delete => MoveKind::Add,
        MoveKind::Swap => MoveKind::Swap,
    }
}

/// Draws an add, delete or swap move from `source`.
///
/// # Panics
/// If the model has no candidate covariates.
pub fn propose<R: Rng + ?Sized>(source: &ModelIndex, rng: &mut R) -> Proposal {
    let p = source.p_total();
    assert!(p >= 1, "proposal needs at least one candidate covariate");
    let size = source.size();
    let mut kinds = Vec::with_capacity(3);
    if size < p {
        kinds.push(MoveKind::Add);
    }
    if size > 0 {
        kinds.push(MoveKind::Delete);
    }
    if size > 0 && size < p {
        kinds.push(MoveKind::Swap);
    }
    let kind = kinds[rng.random_range(0..kinds.len())];
    let included = source.indices();
    let excluded = source.excluded();
    let target = match kind {
        MoveKind::Add => source.with(excluded[rng.random_range(0..excluded.len())]),
        MoveKind::Delete => source.without(included[rng.random_range(0..included.len())]),
        MoveKind::Swap => {
            let out = included[rng.random_range(0..included.len())];
            let inn = excluded[rng.random_range(0..excluded.len())];
            source.without(out).with(inn)
        }
    };
    Proposal {
        target,
        log_fwd: log_move_probability(kind, size, p),
        log_rev: log_move_probability(reverse_kind(kind), target.size(), p),
        move_kind: kind,
    }
}

/// Whether `[1 | X_k]` has full column rank.
///
/// Columns are centered, so this reduces to the rank of the selected
/// cross-product block, checked by pivoted Cholesky with relative
/// tolerance [`RANK_TOL`]. Models with `p_k + 1 > n` are never admissible.
pub fn is_admissible<T: Real>(model: &ModelIndex, xp: &CrossProducts<T>) -> bool {
    let k = model.size();
    if k + 1 > xp.n() {
        return false;
    }
    if k == 0 {
        return true;
    }
    let gk = xp.select(model);
    linalg::pivoted_rank(&gk, k, T::lit(RANK_TOL)) == k
}
