mod common;

use common::sims::{sparse, with_beta};
use common::two_model_pip;
use latent_bma::cavi::FitConfig;
use latent_bma::data::cross_products;
use latent_bma::evidence::{evaluate_model, Evaluator};
use latent_bma::explorer::{enumerate, summarize_enumeration};
use latent_bma::{Criterion, Error, Family, Method, ModelIndex, ModelPriorSpec};

fn prior(p: usize) -> ModelPriorSpec {
    ModelPriorSpec::with_expected_size(p, p as f64 / 2.0).unwrap()
}

#[test]
fn probit_criteria_coincide_through_the_evaluator() {
    let d = sparse(Family::Probit, 400, 4, 21);
    let xp = cross_products(&d);
    let cfg = FitConfig::default();
    let spec = prior(4);
    for bits in [0u64, 0b0011, 0b1111] {
        let m = ModelIndex::from_bits(bits, 4).unwrap();
        let vbc = evaluate_model(&d, &xp, &m, &cfg, spec, Method::Vb, Criterion::Vbc, None).unwrap().record;
        let elbo = evaluate_model(&d, &xp, &m, &cfg, spec, Method::Vb, Criterion::Elbo, None).unwrap().record;
        assert!((vbc.log_evidence - elbo.log_evidence).abs() <= 1e-6 * elbo.log_evidence.abs().max(1.0));
        assert_eq!(vbc.log_prior, elbo.log_prior);
    }
}

#[test]
fn vbc_and_elbo_differ_for_tobit() {
    let d = sparse(Family::Tobit, 300, 3, 5);
    let xp = cross_products(&d);
    let cfg = FitConfig::default();
    let m = ModelIndex::full(3).unwrap();
    let spec = prior(3);
    let vbc = evaluate_model(&d, &xp, &m, &cfg, spec, Method::Vb, Criterion::Vbc, None).unwrap().record;
    let elbo = evaluate_model(&d, &xp, &m, &cfg, spec, Method::Vb, Criterion::Elbo, None).unwrap().record;
    assert!(vbc.log_evidence.is_finite() && elbo.log_evidence.is_finite());
    assert!((vbc.log_evidence - elbo.log_evidence).abs() > 1e-6);
}

#[test]
fn single_covariate_pip_is_logistic_of_log_posterior_gap() {
    for family in [Family::Probit, Family::Tobit, Family::Star, Family::Pln] {
        let d = with_beta(family, 300, &[0.15], 40);
        let xp = cross_products(&d);
        let cfg = FitConfig::default();
        let ev = Evaluator::new(&d, &xp, &cfg, prior(1), Method::Vb, Criterion::Vbc).unwrap();
        let table = enumerate(&ev, 20).unwrap();
        assert_eq!(table.records.len(), 2);
        let s = summarize_enumeration(&table, None).unwrap();
        let want = two_model_pip(table.records[0].log_posterior(), table.records[1].log_posterior());
        assert!((s.pips[0] - want).abs() < 1e-12, "{family}: {} vs {want}", s.pips[0]);
    }
}

#[test]
fn memo_returns_identical_records() {
    let d = sparse(Family::Star, 200, 3, 8);
    let xp = cross_products(&d);
    let cfg = FitConfig::default();
    let ev = Evaluator::new(&d, &xp, &cfg, prior(3), Method::Vb, Criterion::Vbc).unwrap();
    let m = ModelIndex::from_bits(0b101, 3).unwrap();
    let first = ev.evaluate(&m, None).unwrap();
    assert!(!first.cached && first.state.is_some());
    let second = ev.evaluate(&m, None).unwrap();
    assert!(second.cached && second.state.is_none());
    assert_eq!(second.record.log_evidence, first.record.log_evidence);
    assert_eq!(second.record.beta, first.record.beta);
    assert_eq!(ev.memo().len(), 1);
    // another method is a different key
    let avb = Evaluator::new(&d, &xp, &cfg, prior(3), Method::Avb, Criterion::Vbc).unwrap().with_memo(ev.memo().clone());
    assert!(!avb.evaluate(&m, None).unwrap().cached);
    assert_eq!(ev.memo().len(), 2);
}

#[test]
fn avb_probit_is_one_shot_and_null_matches_vb() {
    let d = sparse(Family::Probit, 500, 4, 13);
    let xp = cross_products(&d);
    let cfg = FitConfig::default();
    let avb = Evaluator::new(&d, &xp, &cfg, prior(4), Method::Avb, Criterion::Vbc).unwrap();
    let vb = Evaluator::new(&d, &xp, &cfg, prior(4), Method::Vb, Criterion::Vbc).unwrap();
    let full = ModelIndex::full(4).unwrap();
    assert_eq!(avb.evaluate(&full, None).unwrap().record.iters, 1);
    let null = ModelIndex::null(4).unwrap();
    let a = avb.evaluate(&null, None).unwrap().record;
    let v = vb.evaluate(&null, None).unwrap().record;
    assert!((a.log_evidence - v.log_evidence).abs() < 1e-6 * v.log_evidence.abs());
}

#[test]
fn avb_shrinks_towards_null_latents() {
    let d = with_beta(Family::Tobit, 800, &[0.6, -0.4], 17);
    let xp = cross_products(&d);
    let cfg = FitConfig::default();
    let full = ModelIndex::full(2).unwrap();
    let vb = Evaluator::new(&d, &xp, &cfg, prior(2), Method::Vb, Criterion::Vbc).unwrap().evaluate(&full, None).unwrap();
    let avb = Evaluator::new(&d, &xp, &cfg, prior(2), Method::Avb, Criterion::Vbc).unwrap().evaluate(&full, None).unwrap();
    assert!(avb.record.converged);
    for (a, v) in avb.record.beta.iter().zip(&vb.record.beta) {
        assert_eq!(a.signum(), v.signum());
        assert!(a.abs() < v.abs());
    }
}

#[test]
fn inadmissible_models_are_reported() {
    let x1 = vec![0.3, -1.2, 0.8, 1.5, -0.4, 0.9];
    let x2: Vec<f64> = x1.iter().map(|v| -v).collect();
    let d = latent_bma::data::prepare_dataset(
        vec![x1, x2],
        vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0],
        Family::Probit,
        &Default::default(),
    )
    .unwrap();
    let xp = cross_products(&d);
    let cfg = FitConfig::default();
    let ev = Evaluator::new(&d, &xp, &cfg, prior(2), Method::Vb, Criterion::Vbc).unwrap();
    assert!(matches!(ev.evaluate(&ModelIndex::full(2).unwrap(), None), Err(Error::Inadmissible(_))));
    let table = enumerate(&ev, 20).unwrap();
    assert_eq!(table.records.len(), 3);
    assert_eq!(table.inadmissible, vec![ModelIndex::full(2).unwrap()]);
}

#[test]
fn single_precision_evaluator_tracks_double() {
    let d64 = sparse(Family::Probit, 300, 3, 2);
    let cols: Vec<Vec<f32>> = (0..3).map(|j| d64.column(j).iter().map(|&v| v as f32).collect()).collect();
    let y: Vec<f32> = d64.y().iter().map(|&v| v as f32).collect();
    let d32 = latent_bma::data::prepare_dataset(cols, y, Family::Probit, &Default::default()).unwrap();
    let cfg = FitConfig { tol: 1e-4, ..FitConfig::default() };
    let m = ModelIndex::full(3).unwrap();
    let r64 = evaluate_model(&d64, &cross_products(&d64), &m, &cfg, prior(3), Method::Vb, Criterion::Vbc, None).unwrap().record;
    let r32 = evaluate_model(&d32, &cross_products(&d32), &m, &cfg, prior(3), Method::Vb, Criterion::Vbc, None).unwrap().record;
    assert!((r64.log_evidence - r32.log_evidence).abs() < 1e-2 * r64.log_evidence.abs());
}
