//! Seeded datasets shared by integration tests.

use latent_bma::data::{prepare_dataset, Family, PrepareOptions};
use latent_bma::sim::{simulate, SimDesign};
use latent_bma::Dataset;

/// Sparse-preset design with `ρ = 0.25`.
pub fn sparse(family: Family, n: usize, p: usize, seed: u64) -> Dataset {
    simulate::<f64>(&SimDesign::sparse(family, n, p, seed)).expect("simulated design is valid").dataset
}

/// Design with explicit coefficients.
pub fn with_beta(family: Family, n: usize, beta: &[f64], seed: u64) -> Dataset {
    let mut d = SimDesign::sparse(family, n, beta.len(), seed);
    d.beta_true = beta.to_vec();
    simulate::<f64>(&d).expect("simulated design is valid").dataset
}

/// Two-covariate dataset from explicit rows.
pub fn small(family: Family, x: &[[f64; 2]], y: &[f64]) -> latent_bma::Result<Dataset> {
    let cols = vec![x.iter().map(|r| r[0]).collect(), x.iter().map(|r| r[1]).collect()];
    prepare_dataset(cols, y.to_vec(), family, &PrepareOptions::default())
}
