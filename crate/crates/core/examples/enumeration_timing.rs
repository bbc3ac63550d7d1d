//! Times a full enumeration on a simulated sparse design.
//!
//! `cargo run --release --example enumeration_timing -- star 10000 avb [seed]`

use std::time::Instant;

use latent_bma::cavi::FitConfig;
use latent_bma::data::cross_products;
use latent_bma::evidence::Evaluator;
use latent_bma::explorer::{enumerate, summarize_enumeration};
use latent_bma::sim::{brier, simulate, SimDesign};
use latent_bma::{Criterion, Family, Method, ModelPriorSpec};

fn main() -> latent_bma::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 3 {
        eprintln!("usage: enumeration_timing <family> <n> <vb|avb> [seed]");
        std::process::exit(2);
    }
    let family: Family = args[0].parse()?;
    let n: usize = args[1].parse().map_err(|_| latent_bma::Error::Parameter("n must be an integer".into()))?;
    let method: Method = args[2].parse()?;
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);

    let sim = simulate::<f64>(&SimDesign::sparse(family, n, 10, seed))?;
    let xp = cross_products(&sim.dataset);
    let config = FitConfig::default();
    let prior = ModelPriorSpec::with_expected_size(10, 5.0)?;
    let start = Instant::now();
    let evaluator = Evaluator::new(&sim.dataset, &xp, &config, prior, method, Criterion::Vbc)?;
    let table = enumerate(&evaluator, 20)?;
    let elapsed = start.elapsed().as_secs_f64();
    let summary = summarize_enumeration(&table, None)?;
    let sweeps: usize = table.records.iter().map(|r| r.iters).sum();
    println!(
        "{family} n={n} {method}: {elapsed:.2}s, {sweeps} sweeps, Brier {:.5}",
        brier(&summary.pips, &sim.truth)?
    );
    for (j, pip) in summary.pips.iter().enumerate() {
        println!("  x{} {pip:.4}", j + 1);
    }
    Ok(())
}
