mod support;

use ddpca_core::decompose::{
    admm_exact, admm_relaxed, iterative_projection, one_step, AStep, Method, Projector,
};
use ddpca_core::linalg::eigvals_sym;
use ddpca_core::projection::dd_margin_c;
use ddpca_core::simgen::{gen_exact_decomp, gen_noisy_decomp, RngStream};
use ddpca_core::{Error, SolverConfig, SymmetricMatrix, Warning};
use proptest::prelude::*;

fn spd_input(max_p: usize) -> impl Strategy<Value = (SymmetricMatrix, usize)> {
    (3..=max_p, any::<u64>()).prop_map(|(p, seed)| {
        let mut rng = RngStream::new(seed, 0);
        let k = 1 + (seed % 2) as usize;
        let f = support::random_matrix(p, k, 1.0, &mut rng);
        let noise = support::random_symmetric(p, 0.3, &mut rng);
        (f.gram_rows().add(&noise).with_diag_added(&vec![2.0; p]), k)
    })
}

fn is_exactly_symmetric(m: &SymmetricMatrix) -> bool {
    (0..m.dim()).all(|i| (0..m.dim()).all(|j| m[(i, j)].to_bits() == m[(j, i)].to_bits()))
}

fn rank_at(m: &SymmetricMatrix, rel: f64) -> usize {
    let v = eigvals_sym(m).unwrap();
    let top = v.first().map_or(0.0, |x| x.abs());
    v.iter().filter(|x| x.abs() > rel * top).count()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn outputs_are_symmetric_cone_members((s, k) in spd_input(12)) {
        let cfg = SolverConfig::default().with_rank(k).with_max_iter(30);
        let tol = cfg.tol * s.frob_norm();
        for method in [Method::OneStep, Method::IterativeProjection, Method::AdmmRelaxed, Method::AdmmExact] {
            let d = method.run(&s, &cfg).unwrap();
            prop_assert!(is_exactly_symmetric(&d.a), "{method:?}");
            prop_assert!(is_exactly_symmetric(&d.l), "{method:?}");
            prop_assert!(dd_margin_c(&d.a, 1.0) >= -tol - 1e-12, "{method:?}: {}", dd_margin_c(&d.a, 1.0));
            if method.needs_rank() {
                prop_assert!(d.rank_l <= k);
                prop_assert!(rank_at(&d.l, 1e-10) <= k);
            }
        }
    }

    #[test]
    fn one_step_is_a_single_sdd_iteration((s, k) in spd_input(12)) {
        let cfg = SolverConfig::default().with_rank(k);
        let a = one_step(&s, &cfg).unwrap();
        let b = iterative_projection(&s, &cfg.clone().with_max_iter(1).with_a_step(AStep::Sdd)).unwrap();
        prop_assert!(a.l.frob_dist(&b.l) <= 1e-8);
        prop_assert!(a.a.frob_dist(&b.a) <= 1e-8);
    }

    #[test]
    fn projectors_give_the_same_one_step((s, k) in spd_input(10)) {
        let cfg = SolverConfig { dykstra_tol: 1e-11, dykstra_max_iter: 100_000, ..SolverConfig::default().with_rank(k) };
        let a = one_step(&s, &cfg).unwrap();
        let b = one_step(&s, &cfg.clone().with_projector(Projector::Dykstra)).unwrap();
        prop_assert!(a.a.frob_dist(&b.a) <= 1e-7 * s.frob_norm());
    }

    #[test]
    fn c_above_one_bounds_the_inverse((s, k) in spd_input(10)) {
        let c = 1.5;
        let d = one_step(&s, &SolverConfig::default().with_rank(k).with_c(c)).unwrap();
        let diag = d.a.diag();
        prop_assume!(diag.iter().all(|&v| v > 1e-6));
        let lmin = eigvals_sym(&d.a).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
        // ‖Â⁻¹‖ = 1/λ_min ≤ c/(c−1) · 1/min_j â_jj
        prop_assert!(1.0 / lmin <= c / (c - 1.0) / dmin * (1.0 + 1e-8));
    }
}

#[test]
fn exact_input_in_cone_gives_zero_low_rank() {
    let s = SymmetricMatrix::from_rows(&[[3.0, 1.0, -0.5], [1.0, 2.0, 0.5], [-0.5, 0.5, 1.5]]).unwrap();
    let cfg = SolverConfig::default().with_lambda(1.0).with_max_iter(2000);
    let d = admm_relaxed(&s, &cfg).unwrap();
    assert!(d.l.frob_norm() < 1e-6, "{}", d.l.frob_norm());
    assert!(d.a.frob_dist(&s) < 1e-5);
    let d = admm_exact(&s, &SolverConfig::default().with_max_iter(2000)).unwrap();
    assert!(d.l.frob_norm() < 1e-4 && d.a.frob_dist(&s) < 1e-4);
}

#[test]
fn relaxed_residual_tail_is_monotone() {
    for (rep, lambda) in [(0u64, 0.5), (1, 1.0), (2, 3.0)] {
        let smp = gen_noisy_decomp(60, 3, 1.0, &mut RngStream::new(21, rep)).unwrap();
        let cfg = SolverConfig::default().with_lambda(lambda).with_max_iter(50);
        let d = admm_relaxed(&smp.s, &cfg).unwrap();
        let r = &d.admm.as_ref().unwrap().primal_residuals;
        let tail = &r[r.len().saturating_sub(10)..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "λ = {lambda}: {tail:?}");
    }
}

#[test]
fn iterative_projection_margin_improves() {
    for rep in 0..5 {
        let smp = gen_exact_decomp(50, 3, &mut RngStream::new(22, rep)).unwrap();
        let d = iterative_projection(&smp.s, &SolverConfig::default().with_rank(3).with_max_iter(20)).unwrap();
        assert!(d.margin_history.last().unwrap() >= &d.margin_history[0]);
        assert!(d.residual_history[19] < d.residual_history[0]);
        assert_eq!(d.iterations, 20);
        assert_eq!(d.rank_l, 3);
    }
}

#[test]
fn exact_admm_desk_regression() {
    let smp = gen_exact_decomp(100, 5, &mut RngStream::new(1, 0)).unwrap();
    let d = admm_exact(&smp.s, &SolverConfig::default().with_max_iter(20)).unwrap();
    let res = d.sum().frob_dist(&smp.s) / smp.s.frob_norm();
    let el = d.l.frob_dist(&smp.l) / smp.l.frob_norm();
    let ea = d.a.frob_dist(&smp.a) / smp.a.frob_norm();
    assert_eq!(d.rank_l, 5);
    for (got, want) in [(res, 9.420166575731e-3), (el, 3.600919193714e-1), (ea, 8.248733725592e-2)] {
        assert!((got - want).abs() <= 1e-9 * want, "{got:.12e} vs {want:.12e}");
    }
}

#[test]
fn argument_errors() {
    let s = SymmetricMatrix::identity(4);
    assert!(matches!(one_step(&s, &SolverConfig::default()), Err(Error::Argument(_))));
    assert!(matches!(one_step(&s, &SolverConfig::default().with_rank(4)), Err(Error::Argument(_))));
    assert!(matches!(one_step(&s, &SolverConfig::default().with_rank(1).with_c(0.0)), Err(Error::Argument(_))));
    assert!(matches!(admm_exact(&s, &SolverConfig::default().with_c(2.0)), Err(Error::Argument(_))));
    assert!(admm_relaxed(&s, &SolverConfig::default().with_rho(-1.0)).is_err());
    let bad = SymmetricMatrix::from_diag(&[1.0, f64::NAN, 1.0]);
    assert!(matches!(one_step(&bad, &SolverConfig::default().with_rank(1)), Err(Error::Input(_))));
}

#[test]
fn indefinite_input_is_flagged() {
    let s = SymmetricMatrix::from_diag(&[3.0, 1.0, -2.0, 0.5]);
    let d = one_step(&s, &SolverConfig::default().with_rank(1)).unwrap();
    assert!(d.warnings.iter().any(|w| matches!(w, Warning::NotPositiveSemidefinite { .. })));
}
