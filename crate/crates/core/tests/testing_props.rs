mod support;

use ddpca_core::decompose::iterative_projection;
use ddpca_core::lp::{l1_objective, l1_regress};
use ddpca_core::simgen::{gen_testing_model, RngStream};
use ddpca_core::testing::{
    calibrated_pvalue, chi2_statistic, dd_hc_test, hc_statistic, ideal_testing_error, marginal_pvalues,
    max_statistic, ohc_test, run_test, TestMethod,
};
use ddpca_core::{Matrix, SolverConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hc_is_permutation_invariant(pv in prop::collection::vec(0.0f64..=1.0, 2..60), seed in any::<u64>()) {
        let mut shuffled = pv.clone();
        RngStream::new(seed, 0).shuffle(&mut shuffled);
        prop_assert_eq!(hc_statistic(&pv).unwrap().to_bits(), hc_statistic(&shuffled).unwrap().to_bits());
    }

    #[test]
    fn ideal_error_is_a_shift_invariant_probability(
        null in prop::collection::vec(-5.0f64..5.0, 1..40),
        alt in prop::collection::vec(-5.0f64..5.0, 1..40),
        shift in -100.0f64..100.0,
    ) {
        let e = ideal_testing_error(&null, &alt).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        // Shift by an integer so the pooled order cannot change through rounding.
        let s = shift.round();
        let moved = |v: &[f64]| v.iter().map(|x| x + s).collect::<Vec<_>>();
        let e2 = ideal_testing_error(&moved(&null), &moved(&alt)).unwrap();
        prop_assert!((e - e2).abs() <= 1e-12);
    }

    #[test]
    fn l1_fit_is_locally_optimal(p in 4usize..25, k in 1usize..4, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 1);
        let h = support::random_matrix(p, k, 1.0, &mut rng);
        let mut x = vec![0.0; p];
        rng.fill_normal(&mut x, 2.0);
        let w = l1_regress(&x, &h).unwrap();
        let best = l1_objective(&x, &h, &w);
        for _ in 0..50 {
            let mut d = vec![0.0; k];
            rng.fill_normal(&mut d, 1e-3);
            let v: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + b).collect();
            prop_assert!(l1_objective(&x, &h, &v) >= best - 1e-10);
        }
    }
}

#[test]
fn l1_fit_survives_a_thousand_perturbations() {
    let mut rng = RngStream::new(11, 0);
    let h = support::random_matrix(40, 3, 1.0, &mut rng);
    let mut x = vec![0.0; 40];
    rng.fill_normal(&mut x, 1.0);
    let w = l1_regress(&x, &h).unwrap();
    let best = l1_objective(&x, &h, &w);
    for scale in [1e-6, 1e-3, 1e-1] {
        for _ in 0..1000 / 3 {
            let mut d = vec![0.0; 3];
            rng.fill_normal(&mut d, scale);
            let v: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + b).collect();
            assert!(l1_objective(&x, &h, &v) >= best - 1e-12);
        }
    }
}

#[test]
fn l1_fit_beats_least_squares_on_its_own_objective() {
    let mut rng = RngStream::new(12, 0);
    let h = support::random_matrix(30, 2, 1.0, &mut rng);
    let mut x = vec![0.0; 30];
    rng.fill_normal(&mut x, 1.0);
    let w = l1_regress(&x, &h).unwrap();
    let hth: Vec<f64> = (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| {
        (0..30).map(|i| h[(i, a)] * h[(i, b)]).sum()
    }).collect();
    let hx: Vec<f64> = (0..2).map(|a| (0..30).map(|i| h[(i, a)] * x[i]).sum()).collect();
    let ls = support::gauss_solve(hth, hx, 2).unwrap();
    assert!(l1_objective(&x, &h, &w) <= l1_objective(&x, &h, &ls) + 1e-12);
}

#[test]
fn l1_fit_on_a_constant_covariate_is_a_median() {
    let x = [3.0, -1.0, 7.0, 0.5, 2.0];
    let ones = Matrix::from_fn(5, 1, |_, _| 1.0);
    let w = l1_regress(&x, &ones).unwrap();
    assert!((w[0] - 2.0).abs() < 1e-12);
    // Even length: any point between the middle pair is optimal.
    let x = [1.0, 4.0, 2.0, 9.0];
    let w = l1_regress(&x, &Matrix::from_fn(4, 1, |_, _| 1.0)).unwrap();
    assert!((2.0..=4.0).contains(&w[0]));
}

#[test]
fn hc_examples() {
    let hc = hc_statistic(&[0.01, 0.2, 0.6, 0.9]).unwrap();
    assert!((hc - 4.824).abs() < 1e-3);
    for p in [2usize, 10, 101] {
        let pv: Vec<f64> = (1..=p).map(|j| j as f64 / p as f64).collect();
        assert!(hc_statistic(&pv).unwrap().abs() < 1e-12);
    }
}

#[test]
fn pvalue_examples() {
    let pv = marginal_pvalues(&[1.959964, -3.0, 0.0], &[1.0, 1.0, 4.0]).unwrap();
    assert!((pv[0] - 0.05).abs() < 1e-6);
    assert!((pv[1] - 0.0027).abs() < 1e-4);
    assert_eq!(pv[2], 1.0);
    let scaled = marginal_pvalues(&[2.0 * 1.959964], &[4.0]).unwrap();
    assert!((scaled[0] - 0.05).abs() < 1e-6);
    assert!(marginal_pvalues(&[1.0], &[0.0]).is_err());
}

#[test]
fn ideal_error_extremes() {
    let a = [0.3, 1.2, -0.5, 2.0];
    assert_eq!(ideal_testing_error(&a, &a).unwrap(), 1.0);
    assert_eq!(ideal_testing_error(&[0.0, 1.0], &[5.0, 6.0]).unwrap(), 0.0);
    assert!(ideal_testing_error(&[], &a).is_err());
}

#[test]
fn simple_statistic_examples() {
    assert_eq!(chi2_statistic(&[3.0, -4.0]), 25.0);
    assert_eq!(max_statistic(&[1.0, -7.5, 2.0]), 7.5);
    assert_eq!(calibrated_pvalue(10.0, &[1.0, 2.0, 3.0]), 0.25);
    assert_eq!(calibrated_pvalue(0.0, &[1.0, 2.0, 3.0]), 1.0);
}

#[test]
fn dd_hc_without_factors_is_ohc() {
    let model = gen_testing_model(40, 50, 4, 0.5, &mut RngStream::new(13, 0)).unwrap();
    let draw = model.draw(true, &mut RngStream::new(13, 1)).unwrap();
    let cfg = SolverConfig::default();
    let a = dd_hc_test(&draw.z, &draw.sigma_hat, 0, &cfg).unwrap();
    let b = ohc_test(&draw.z, &draw.sigma_hat).unwrap();
    assert_eq!(a.statistic, b.statistic);
    assert_eq!(a.method, TestMethod::DdHc);
}

#[test]
fn dd_hc_removes_signal_in_the_factor_span() {
    let model = gen_testing_model(40, 50, 0, 0.0, &mut RngStream::new(14, 0)).unwrap();
    let draw = model.draw(false, &mut RngStream::new(14, 1)).unwrap();
    let cfg = SolverConfig::default();
    let d = iterative_projection(&draw.sigma_hat, &cfg.clone().with_rank(2).with_max_iter(20)).unwrap();
    let etas = d.factors.columns();
    let x = etas.mul_vec(&[3.0, -2.0]);
    let r = dd_hc_test(&x, &draw.sigma_hat, 2, &cfg).unwrap();
    assert!(r.adjusted_pvalues.iter().all(|&v| v > 1.0 - 1e-6), "{:?}", &r.adjusted_pvalues[..4]);
}

#[test]
fn every_method_runs_and_names_round_trip() {
    let model = gen_testing_model(30, 50, 3, 0.5, &mut RngStream::new(15, 0)).unwrap();
    let draw = model.draw(true, &mut RngStream::new(15, 1)).unwrap();
    for m in [TestMethod::Ohc, TestMethod::Ihc, TestMethod::IhcDd, TestMethod::DdHc, TestMethod::Chi2, TestMethod::Max] {
        let r = run_test(m, &draw.z, &draw.sigma_hat, 2, &SolverConfig::default()).unwrap();
        assert!(r.statistic.is_finite(), "{m:?}");
        assert_eq!(r.adjusted_pvalues.len(), 30);
        assert_eq!(TestMethod::parse(m.name()), Some(m));
    }
    assert!(run_test(TestMethod::Ohc, &draw.z[..10], &draw.sigma_hat, 2, &SolverConfig::default()).is_err());
}
