mod support;

use ddpca_core::covariance::{ddpca_from_cov, sample_cov};
use ddpca_core::lda::{
    error_curve, lda_classify, lda_train, stratified_folds, threshold_for_count, LabeledDataset, OmegaMethod,
    ScoreScale,
};
use ddpca_core::portfolio::{
    min_risk_weights, rolling_backtest, weights_from_estimate, Date, PortfolioEstimator, ReturnSeries,
};
use ddpca_core::simgen::{gen_factor_cov, RngStream};
use ddpca_core::{Matrix, SolverConfig, SymmetricMatrix};
use proptest::prelude::*;

fn spd(p: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = RngStream::new(seed, 0);
    let f = support::random_matrix(p, p, 1.0, &mut rng);
    f.gram_rows().with_diag_added(&vec![0.5; p])
}

/// Two Gaussian classes; class 2 is shifted by `gap` in the first `s` features.
fn two_classes(n: usize, p: usize, s: usize, gap: f64, seed: u64) -> LabeledDataset {
    let mut rng = RngStream::new(seed, 0);
    let x = support::random_matrix(n, p, 1.0, &mut rng);
    let labels: Vec<u8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { 2 }).collect();
    let x = Matrix::from_fn(n, p, |i, j| x[(i, j)] + if labels[i] == 2 && j < s { gap } else { 0.0 });
    LabeledDataset::new(x, labels).unwrap()
}

fn trading_days(months: u8, per_month: u8) -> Vec<Date> {
    (1..=months).flat_map(|m| (1..=per_month).map(move |d| Date::new(2020, m, d).unwrap())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn min_risk_weights_are_scale_invariant(p in 2usize..15, seed in any::<u64>(), c in 0.01f64..100.0) {
        let s = spd(p, seed);
        let w = min_risk_weights(&s).unwrap();
        let wc = min_risk_weights(&s.scaled(c)).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        let mag = w.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(w.iter().zip(&wc).all(|(a, b)| (a - b).abs() <= 1e-9 * mag));
    }

    #[test]
    fn lda_is_invariant_to_global_rescaling(seed in any::<u64>(), c in 0.1f64..10.0) {
        let data = two_classes(40, 12, 3, 1.0, seed);
        let scaled = LabeledDataset::new(data.features.scaled(c), data.labels.clone()).unwrap();
        let cfg = SolverConfig::default();
        for method in [OmegaMethod::Identity, OmegaMethod::Diagonal, OmegaMethod::Ddpca] {
            let o1 = method.estimate(&data, 2, &cfg).unwrap();
            let o2 = method.estimate(&scaled, 2, &cfg).unwrap();
            let s1 = lda_train(&data, &o1, 0.0, ScoreScale::SampleSize).unwrap();
            let s2 = lda_train(&scaled, &o2, 0.0, ScoreScale::SampleSize).unwrap();
            for i in 0..data.n() {
                let a = lda_classify(&s1, &o1, data.features.row(i)).unwrap();
                let b = lda_classify(&s2, &o2, scaled.features.row(i)).unwrap();
                prop_assert_eq!(a, b, "{:?}", method);
            }
        }
    }

    #[test]
    fn folds_partition_every_sample(n1 in 5usize..30, n2 in 5usize..30, folds in 2usize..6, seed in any::<u64>()) {
        let labels: Vec<u8> = (0..n1 + n2).map(|i| if i < n1 { 1 } else { 2 }).collect();
        let f = stratified_folds(&labels, folds, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert!(f.iter().all(|&v| v < folds));
        for class in [1u8, 2] {
            let counts: Vec<usize> = (0..folds)
                .map(|k| (0..labels.len()).filter(|&i| labels[i] == class && f[i] == k).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}

#[test]
fn identity_weights_are_uniform() {
    for p in [1usize, 3, 10] {
        let w = min_risk_weights(&SymmetricMatrix::identity(p)).unwrap();
        assert!(w.iter().all(|v| (v - 1.0 / p as f64).abs() < 1e-15));
    }
}

#[test]
fn factor_weights_match_dense_weights() {
    let smp = gen_factor_cov(30, 100, 3, &mut RngStream::new(8, 0)).unwrap();
    let est = ddpca_from_cov(&sample_cov(&smp.x).unwrap(), 3, &SolverConfig::default()).unwrap();
    let a = weights_from_estimate(&est).unwrap();
    let b = min_risk_weights(&est.sigma).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
}

#[test]
fn backtest_never_looks_ahead() {
    let days = trading_days(6, 20);
    let t = days.len();
    let smp = gen_factor_cov(8, t, 2, &mut RngStream::new(9, 0)).unwrap();
    let series = ReturnSeries::new(days.clone(), smp.x.clone()).unwrap();
    let estimators = [PortfolioEstimator::Ddpca, PortfolioEstimator::Sample, PortfolioEstimator::Diagonal];
    let cfg = SolverConfig::default();
    let clean = rolling_backtest(&series, 40, 2, &estimators, &cfg).unwrap();
    assert_eq!(clean.months.len(), 4);
    assert_eq!(clean.months[0].start, Date::new(2020, 3, 1).unwrap());
    // Poison everything from May onward.
    let cut = 80;
    let poisoned = Matrix::from_fn(t, 8, |i, j| if i >= cut { 1e3 * (1.0 + (i * j) as f64) } else { smp.x[(i, j)] });
    let dirty = rolling_backtest(&ReturnSeries::new(days, poisoned).unwrap(), 40, 2, &estimators, &cfg).unwrap();
    for m in 0..2 {
        assert_eq!(clean.months[m], dirty.months[m]);
    }
    assert_ne!(clean.months[2].risks, dirty.months[2].risks);
}

#[test]
fn backtest_rejects_short_histories() {
    let days = trading_days(2, 10);
    let series = ReturnSeries::new(days, Matrix::from_fn(20, 3, |i, j| ((i + 2 * j) % 5) as f64)).unwrap();
    assert!(rolling_backtest(&series, 30, 1, &[PortfolioEstimator::Sample], &SolverConfig::default()).is_err());
    let bad = vec![Date::new(2020, 1, 2).unwrap(), Date::new(2020, 1, 1).unwrap()];
    assert!(ReturnSeries::new(bad, Matrix::zeros(2, 3)).is_err());
    assert!(Date::new(2020, 13, 1).is_err());
}

#[test]
fn separable_classes_are_classified_perfectly() {
    let data = two_classes(60, 10, 4, 25.0, 10);
    let cfg = SolverConfig::default();
    let curve = error_curve(
        &data,
        &[OmegaMethod::Identity, OmegaMethod::Diagonal, OmegaMethod::Ddpca],
        2,
        5,
        ScoreScale::SampleSize,
        &cfg,
        &mut RngStream::new(10, 1),
    )
    .unwrap();
    for row in &curve.errors {
        assert_eq!(row.len(), 10);
        assert!(row.iter().all(|&e| e == 0), "{row:?}");
    }
}

#[test]
fn keeping_every_feature_selects_every_feature() {
    let data = two_classes(30, 8, 2, 1.0, 11);
    let omega = SymmetricMatrix::identity(8);
    let state = lda_train(&data, &omega, 0.0, ScoreScale::Pooled).unwrap();
    let t = threshold_for_count(&state.z_tilde, 8);
    let all = lda_train(&data, &omega, t, ScoreScale::Pooled).unwrap();
    assert!(all.w.iter().all(|&v| v == 1.0 || v == -1.0));
    let t3 = threshold_for_count(&state.z_tilde, 3);
    let three = lda_train(&data, &omega, t3, ScoreScale::Pooled).unwrap();
    assert_eq!(three.w.iter().filter(|&&v| v != 0.0).count(), 3);
}

#[test]
fn constant_features_are_dropped() {
    let mut data = two_classes(20, 4, 1, 2.0, 12);
    for i in 0..20 {
        data.features[(i, 2)] = 7.0;
    }
    let state = lda_train(&data, &SymmetricMatrix::identity(4), 0.0, ScoreScale::SampleSize).unwrap();
    assert_eq!(state.dropped, vec![2]);
    assert_eq!(state.w[2], 0.0);
    assert!(LabeledDataset::new(Matrix::zeros(3, 2), vec![1, 2, 3]).is_err());
}
