mod support;

use ddpca_core::linalg::{
    cholesky, eig_sym, eig_sym_top, inverse_sym, pinv_sym, rank_k_approx, spectral_norm, svt, Lu,
};
use ddpca_core::simgen::RngStream;
use ddpca_core::{Matrix, SymmetricMatrix};
use proptest::prelude::*;

fn symmetric(max_p: usize) -> impl Strategy<Value = SymmetricMatrix> {
    (1..=max_p).prop_flat_map(|p| {
        prop::collection::vec(-3.0f64..3.0, p * p)
            .prop_map(move |v| Matrix::from_vec(p, p, v).unwrap().sym_part())
    })
}

fn gram_error(vectors: &Matrix) -> f64 {
    let g = vectors.gram_rows();
    let mut worst = 0.0f64;
    for i in 0..g.dim() {
        for j in 0..g.dim() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - want).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn eigen_reconstruction(m in symmetric(50)) {
        let es = eig_sym(&m).unwrap();
        let back = es.reconstruct();
        prop_assert!(back.frob_dist(&m) <= 1e-8 * m.frob_norm().max(1e-300));
        prop_assert!(gram_error(&es.vectors) <= 1e-10);
        prop_assert!(es.values.windows(2).all(|w| w[0].abs() >= w[1].abs()));
    }

    #[test]
    fn top_pairs_match_full_decomposition(m in symmetric(30), k in 1usize..5) {
        let k = k.min(m.dim());
        let full = eig_sym(&m).unwrap();
        let top = eig_sym_top(&m, k).unwrap();
        for (a, b) in top.values.iter().zip(&full.values) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
        prop_assert!(gram_error(&top.vectors) <= 1e-10);
    }

    #[test]
    fn svt_is_nonexpansive(a in symmetric(12), tau in 0.0f64..3.0, shift in -1.0f64..1.0) {
        let b = SymmetricMatrix::from_upper(a.dim(), |i, j| a[(i, j)] + shift * ((i * 7 + j * 3) % 5) as f64 / 5.0);
        let d = a.frob_dist(&b);
        let sa = svt(&a, tau).unwrap();
        let sb = svt(&b, tau).unwrap();
        prop_assert!(sa.frob_dist(&sb) <= d + 1e-9);
    }

    #[test]
    fn rank_k_is_the_best_approximation(m in symmetric(6), k in 1usize..6, seed in any::<u64>()) {
        let k = k.min(m.dim());
        let approx = rank_k_approx(&m, k).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let oracle = support::rank_k_sampling_oracle(&m, k, 200, &mut rng);
        prop_assert!(approx.frob_dist(&m) <= oracle + 1e-9);
    }

    #[test]
    fn lu_and_cholesky_solve(m in symmetric(20)) {
        let p = m.dim();
        let spd = m.gram_rows().add(&SymmetricMatrix::identity(p));
        let b: Vec<f64> = (0..p).map(|i| (i as f64).sin()).collect();
        let x = Lu::new(&spd).unwrap().solve(&b);
        let r = spd.mul_vec(&x);
        prop_assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() <= 1e-9));
        let c = cholesky(&spd).unwrap();
        let cct = c.matmul(&c.transpose());
        prop_assert!(cct.frob_dist(&spd) <= 1e-10 * spd.frob_norm());
        let inv = inverse_sym(&spd).unwrap();
        let eye = inv.matmul(&spd);
        prop_assert!(eye.frob_dist(&Matrix::identity(p)) <= 1e-9 * (p as f64));
    }
}

#[test]
fn eigen_examples() {
    let es = eig_sym(&SymmetricMatrix::identity(3)).unwrap();
    assert_eq!(es.values, vec![1.0, 1.0, 1.0]);
    let es = eig_sym(&SymmetricMatrix::from_diag(&[1.0, 3.0])).unwrap();
    assert_eq!(es.values, vec![3.0, 1.0]);
    assert_eq!(es.vector(0), &[0.0, 1.0]);
    let es = eig_sym(&SymmetricMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap()).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((es.values[0] - 3.0).abs() < 1e-14 && (es.values[1] - 1.0).abs() < 1e-14);
    assert!((es.vector(0)[0] - h).abs() < 1e-14 && (es.vector(0)[1] - h).abs() < 1e-14);
    assert!((es.vector(1)[0].abs() - h).abs() < 1e-14);
    assert!((es.vector(1)[0] + es.vector(1)[1]).abs() < 1e-14);
}

#[test]
fn ordering_ties_are_deterministic() {
    let es = eig_sym(&SymmetricMatrix::from_diag(&[-2.0, 2.0, 1.0])).unwrap();
    assert_eq!(es.values, vec![2.0, -2.0, 1.0]);
    let again = eig_sym(&SymmetricMatrix::from_diag(&[-2.0, 2.0, 1.0])).unwrap();
    assert_eq!(es, again);
}

#[test]
fn rank_k_examples() {
    let mut rng = RngStream::new(9, 0);
    let m = support::random_symmetric(7, 1.0, &mut rng);
    assert!(rank_k_approx(&m, 7).unwrap().frob_dist(&m) <= 1e-10);
    let v = [1.0, -2.0, 0.5, 3.0];
    let outer = SymmetricMatrix::from_upper(4, |i, j| v[i] * v[j]);
    assert!(rank_k_approx(&outer, 1).unwrap().frob_dist(&outer) <= 1e-12);
    assert!(rank_k_approx(&m, 0).is_err());
    assert!(rank_k_approx(&m, 8).is_err());
}

#[test]
fn svt_examples() {
    let d = SymmetricMatrix::from_diag(&[3.0, -2.0, 0.5]);
    assert_eq!(svt(&d, 1.0).unwrap(), SymmetricMatrix::from_diag(&[2.0, -1.0, 0.0]));
    assert_eq!(svt(&d, 0.0).unwrap(), d);
    assert_eq!(svt(&d, 5.0).unwrap(), SymmetricMatrix::zeros(3));
    assert!(svt(&d, -1.0).is_err());
}

#[test]
fn norms_and_inverses() {
    let m = SymmetricMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
    assert!((spectral_norm(&m).unwrap() - 3.0).abs() < 1e-14);
    let singular = SymmetricMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
    let g = pinv_sym(&singular, 1e-10).unwrap();
    assert!(g.frob_dist(&SymmetricMatrix::from_rows(&[[0.25, 0.25], [0.25, 0.25]]).unwrap()) < 1e-14);
    assert!(inverse_sym(&singular).is_err());
    assert!(cholesky(&SymmetricMatrix::from_diag(&[1.0, -1.0])).is_err());
}

#[test]
fn symmetric_construction() {
    let asym = Matrix::from_rows(&[[1.0, 2.0], [2.0 + 1e-12, 1.0]]).unwrap();
    let s = SymmetricMatrix::from_matrix(asym, 1e-8).unwrap();
    assert_eq!(s[(0, 1)], s[(1, 0)]);
    let far = Matrix::from_rows(&[[1.0, 2.0], [3.0, 1.0]]).unwrap();
    assert!(SymmetricMatrix::from_matrix(far, 1e-8).is_err());
}
