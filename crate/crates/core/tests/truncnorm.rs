mod common;

use common::oracle_trunc_moments;
use latent_bma::truncnorm::trunc_norm_moments;

#[test]
fn half_normal_oracle_self_check() {
    let (mean, var, lm) = oracle_trunc_moments(0.0, 1.0, 0.0, f64::INFINITY).unwrap();
    assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9);
    assert!((var - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-9);
    assert!((lm - 0.5f64.ln()).abs() < 1e-9);
}

#[test]
fn far_tail_matches_oracle() {
    let m = trunc_norm_moments(-6.0, 1.0, 0.0, f64::INFINITY).unwrap();
    let (mean, var, lm) = oracle_trunc_moments(-6.0, 1.0, 0.0, f64::INFINITY).unwrap();
    println!("{} {} | {} {} | {} {}", m.mean, mean, m.variance, var, m.log_mass, lm);
    assert!(((m.mean - mean) / mean).abs() < 1e-8);
    assert!(((m.variance - var) / var).abs() < 1e-8);
    assert!(((m.log_mass - lm) / lm).abs() < 1e-8);
}

#[test]
fn grid_matches_oracle() {
    let report = common::checks::trunc_grid_check();
    println!("worst {:?} over {} cases", report.worst, report.cases);
    assert_eq!(report.cases, 500);
    assert!(report.all_finite);
    let (a, b, c) = report.worst;
    assert!(a < 1e-8 && b < 1e-8 && c < 1e-8);
}

#[test]
fn narrow_interval_mean_is_midpoint() {
    let (mean, _, _) = oracle_trunc_moments(0.0, 1.0, 1.0, 1.001).unwrap();
    assert!((mean - 1.0005).abs() < 1e-6);
    let m = trunc_norm_moments(0.0, 1.0, 1.0, 1.001).unwrap();
    assert!((m.mean - mean).abs() < 1e-10);
}
