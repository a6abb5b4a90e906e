mod support;

use ddpca_core::covariance::{
    ddpca_from_cov, error_report, factor_precision, poet_from_cov, precision_from_estimate, sample_cov,
    CovEstimate, Truth,
};
use ddpca_core::linalg::{inverse_sym, spectral_norm, Lu};
use ddpca_core::portfolio::solve_factor_system;
use ddpca_core::simgen::{gen_factor_cov, RngStream};
use ddpca_core::{Matrix, SolverConfig, SymmetricMatrix};
use proptest::prelude::*;

fn dominant(p: usize, rng: &mut RngStream) -> SymmetricMatrix {
    let off = support::random_symmetric(p, 0.3, rng);
    let row_sums: Vec<f64> = (0..p).map(|i| (0..p).filter(|&j| j != i).map(|j| off[(i, j)].abs()).sum()).collect();
    SymmetricMatrix::from_upper(p, |i, j| if i == j { row_sums[i] + 0.5 + 0.1 * (i % 3) as f64 } else { off[(i, j)] })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn factor_precision_inverts(p in 2usize..25, k in 0usize..4, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let a = dominant(p, &mut rng);
        let b = support::random_matrix(p, k, 1.0, &mut rng);
        let sigma = a.add(&b.gram_rows());
        let omega = factor_precision(&a, &b).unwrap();
        let eye = omega.matmul(&sigma);
        prop_assert!(eye.frob_dist(&Matrix::identity(p)) <= 1e-9 * p as f64);
    }

    #[test]
    fn woodbury_solve_matches_dense(p in 2usize..30, k in 1usize..4, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 1);
        let a = dominant(p, &mut rng);
        let b = support::random_matrix(p, k, 1.0, &mut rng);
        let mut r = vec![0.0; p];
        rng.fill_normal(&mut r, 1.0);
        let x = solve_factor_system(&a, &b, &r).unwrap();
        let y = Lu::new(&a.add(&b.gram_rows())).unwrap().solve(&r);
        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() <= 1e-8 * scale));
    }

    #[test]
    fn poet_at_full_threshold_shares_the_low_rank_part(seed in any::<u64>(), k in 1usize..4) {
        let smp = gen_factor_cov(30, 60, 3, &mut RngStream::new(seed, 2)).unwrap();
        let s = sample_cov(&smp.x).unwrap();
        let poet = poet_from_cov(&s, k, 1.0).unwrap();
        let dd = ddpca_from_cov(&s, k, &SolverConfig::default()).unwrap();
        let l_poet = poet.sigma.sub(poet.residual.as_ref().unwrap());
        let l_dd = &dd.decomposition.as_ref().unwrap().l;
        prop_assert!(l_poet.frob_dist(l_dd) <= 1e-10 * (1.0 + s.frob_norm()));
        // a = 1 keeps only the diagonal of the residual
        let r = poet.residual.unwrap();
        prop_assert!((0..30).all(|i| (0..30).all(|j| i == j || r[(i, j)] == 0.0)));
    }
}

#[test]
fn woodbury_twenty_by_three() {
    let mut rng = RngStream::new(77, 0);
    let a = dominant(20, &mut rng);
    let b = support::random_matrix(20, 3, 1.0, &mut rng);
    let full = a.add(&b.gram_rows());
    let omega = factor_precision(&a, &b).unwrap();
    let dense = support::dense_inverse(&Matrix::from_fn(20, 20, |i, j| full[(i, j)]));
    let diff = (0..20).flat_map(|i| (0..20).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max((omega[(i, j)] - dense[(i, j)]).abs()));
    assert!(diff <= 1e-8, "{diff}");
}

#[test]
fn error_report_of_a_shifted_truth() {
    let p = 16;
    let eps = 0.05;
    let smp = gen_factor_cov(p, 10, 2, &mut RngStream::new(3, 0)).unwrap();
    let precision = inverse_sym(&smp.sigma).unwrap();
    let a_inv = inverse_sym(&smp.a).unwrap();
    let truth = Truth { sigma: &smp.sigma, precision: &precision, a: &smp.a, a_inv: &a_inv };
    let est = CovEstimate::sample(smp.sigma.with_diag_added(&vec![eps; p]));
    let rep = error_report(&est, &truth).unwrap();
    assert!((rep.sigma_frob - eps * (p as f64).sqrt()).abs() < 1e-12);
    assert!((rep.sigma_spec - eps).abs() < 1e-10);
    assert!(rep.residual_frob.is_none());
}

#[test]
fn precision_from_ddpca_matches_dense_inverse() {
    let smp = gen_factor_cov(40, 120, 3, &mut RngStream::new(4, 0)).unwrap();
    let s = sample_cov(&smp.x).unwrap();
    let est = ddpca_from_cov(&s, 3, &SolverConfig::default()).unwrap();
    let (omega, _) = precision_from_estimate(&est).unwrap();
    let dense = inverse_sym(&est.sigma).unwrap();
    assert!(omega.frob_dist(&dense) <= 1e-8 * dense.frob_norm());
}

#[test]
fn sample_covariance_ignores_the_mean() {
    let mut rng = RngStream::new(5, 0);
    let x = support::random_matrix(30, 6, 1.0, &mut rng);
    let shifted = Matrix::from_fn(30, 6, |i, j| x[(i, j)] + 10.0 * j as f64);
    let a = sample_cov(&x).unwrap();
    let b = sample_cov(&shifted).unwrap();
    assert!(a.frob_dist(&b) <= 1e-12 * 100.0);
}

#[test]
fn residual_inverse_norm_is_bounded_for_c_above_one() {
    let c = 1.5;
    let smp = gen_factor_cov(50, 200, 3, &mut RngStream::new(6, 0)).unwrap();
    let s = sample_cov(&smp.x).unwrap();
    let est = ddpca_from_cov(&s, 3, &SolverConfig::default().with_c(c)).unwrap();
    let a = est.residual.unwrap();
    let dmin = a.diag().into_iter().fold(f64::INFINITY, f64::min);
    let inv = inverse_sym(&a).unwrap();
    let norm = spectral_norm(&inv).unwrap();
    assert!(norm <= c / (c - 1.0) / dmin * (1.0 + 1e-8), "{norm} vs {}", c / (c - 1.0) / dmin);
}
