use latent_bma::sim::{brier, simulate, Preset, SimDesign};
use latent_bma::{Family, ModelIndex};
use proptest::prelude::*;

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn independent_covariates_are_uncorrelated() {
    let mut d = SimDesign::sparse(Family::Probit, 10_000, 2, 1);
    d.rho = 0.0;
    let t = simulate::<f64>(&d).unwrap().table;
    assert!(corr(&t.columns[0], &t.columns[1]).abs() < 0.05);
}

#[test]
fn adjacent_covariates_follow_rho() {
    let t = simulate::<f64>(&SimDesign::sparse(Family::Probit, 10_000, 4, 2)).unwrap().table;
    for j in 0..3 {
        let r = corr(&t.columns[j], &t.columns[j + 1]);
        assert!((r - 0.25).abs() < 0.03, "columns {j},{}: {r}", j + 1);
    }
    let lag2 = corr(&t.columns[0], &t.columns[2]);
    assert!((lag2 - 0.0625).abs() < 0.03);
}

#[test]
fn null_probit_is_balanced() {
    let mut d = SimDesign::sparse(Family::Probit, 10_000, 3, 3);
    d.beta_true = vec![0.0; 3];
    let y = simulate::<f64>(&d).unwrap().table.y;
    let share = y.iter().sum::<f64>() / y.len() as f64;
    assert!((share - 0.5).abs() < 0.02, "{share}");
}

#[test]
fn outcomes_are_valid_for_each_family() {
    for family in [Family::Probit, Family::Tobit, Family::Star, Family::Pln] {
        let mut d = SimDesign::sparse(family, 2000, 4, 4);
        d.y_lower = 0.5;
        let y = simulate::<f64>(&d).unwrap().table.y;
        match family {
            Family::Probit => assert!(y.iter().all(|&v| v == 0.0 || v == 1.0)),
            Family::Tobit => {
                assert!(y.iter().all(|&v| v >= 0.5));
                assert!(y.contains(&0.5));
            }
            Family::Star | Family::Pln => assert!(y.iter().all(|&v| v >= 0.0 && v.fract() == 0.0)),
        }
    }
}

#[test]
fn same_seed_same_data() {
    for family in [Family::Tobit, Family::Pln] {
        let d = SimDesign::dense(family, 500, 6, 11);
        let a = simulate::<f64>(&d).unwrap();
        let b = simulate::<f64>(&d).unwrap();
        assert_eq!(a.table.columns, b.table.columns);
        assert_eq!(a.table.y, b.table.y);
        let c = simulate::<f64>(&SimDesign { seed: 12, ..d }).unwrap();
        assert_ne!(a.table.y, c.table.y);
    }
}

#[test]
fn presets() {
    assert_eq!(Preset::Sparse.beta(6), vec![0.5, -0.5, 0.25, -0.25, 0.0, 0.0]);
    assert_eq!(Preset::Dense.beta(6), vec![0.5, -0.5, 0.25, -0.25, 0.15, 0.15]);
    let d = SimDesign::sparse(Family::Pln, 10, 6, 1);
    assert_eq!(d.truth().unwrap(), ModelIndex::from_indices(6, &[0, 1, 2, 3]).unwrap());
    assert_eq!(d.sigma2_true, 0.1);
    assert!(simulate::<f64>(&SimDesign { rho: 1.0, ..d }).is_err());
}

proptest! {
    #[test]
    fn brier_is_permutation_equivariant(
        pips in proptest::collection::vec(0.0f64..=1.0, 5),
        bits in 0u64..32,
        shift in 0usize..5,
    ) {
        let truth = ModelIndex::from_bits(bits, 5).unwrap();
        let perm: Vec<usize> = (0..5).map(|j| (j + shift) % 5).collect();
        let pips2: Vec<f64> = perm.iter().map(|&j| pips[j]).collect();
        let idx: Vec<usize> = (0..5).filter(|&k| truth.contains(perm[k])).collect();
        let truth2 = ModelIndex::from_indices(5, &idx).unwrap();
        let a = brier(&pips, &truth).unwrap();
        let b = brier(&pips2, &truth2).unwrap();
        prop_assert!((a - b).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
