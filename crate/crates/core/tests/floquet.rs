mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use revtori::floquet::{
    anticommuting_spectrum_classify, exponent_verify, fundamental_solution_check, pairing_defect, random_anticommuting,
    reduce_variational, unperturbed_floquet_matrix, zero_multiplicity_check,
};
use revtori::fourier::C64;
use revtori::linalg::eigenvalues;
use revtori::torus::{newton_solve, solver_grid, TorusProblem};

fn k_matrix(p: usize, q: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p + q, p + q, |i, j| if i != j { 0.0 } else if i < p { 1.0 } else { -1.0 })
}

fn nearest(z: C64, pool: &[C64]) -> f64 {
    pool.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_matches_eigensolver(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l0 = random_anticommuting(4, 4, &mut rng);
        let k = k_matrix(4, 4);
        let ev: Vec<C64> = eigenvalues(&l0);
        match anticommuting_spectrum_classify(&l0, &k) {
            Ok(t) => {
                let ex = t.exponents();
                prop_assert_eq!(ex.len(), 8);
                for z in &ex {
                    prop_assert!(nearest(*z, &ev) <= 1e-8 * z.norm().max(1.0));
                }
                for z in &ev {
                    prop_assert!(nearest(*z, &ex) <= 1e-8 * z.norm().max(1.0));
                }
                let real = ev.iter().filter(|z| z.im.abs() < 1e-9 * z.norm()).count();
                let imag = ev.iter().filter(|z| z.re.abs() < 1e-9 * z.norm()).count();
                prop_assert_eq!(real, 2 * t.d1);
                prop_assert_eq!(imag, 2 * t.d2);
                prop_assert!(t.alpha.windows(2).all(|w| w[0] <= w[1]) || t.d3 > 0);
                // anti-commuting with K and with -K is the same condition
                let neg = anticommuting_spectrum_classify(&l0, &(-&k)).unwrap();
                prop_assert_eq!(neg, t);
            }
            Err(e) => prop_assert!(matches!(e, revtori::Error::DegenerateSpectrum { .. }), "{e}"),
        }
        prop_assert!(pairing_defect(&ev) < 1e-8);
    }
}

#[test]
fn kernel_multiplicity_examples() {
    let r = zero_multiplicity_check(3, 1, 100, 5);
    assert!(r.passed && r.min_kernel >= 2);
    let r = zero_multiplicity_check(2, 2, 100, 5);
    assert!(r.passed && r.max_kernel == 0);
}

#[test]
fn unperturbed_torus_is_already_reduced() {
    let (cfg, sys, inv) = common::reference_system(0, 11);
    let fd = cfg.frequency_data().unwrap();
    let (t, _) = newton_solve(&sys, &inv, &fd, &cfg.nu0(), 0.0, &cfg.solver).unwrap();
    let fl = reduce_variational(&t, &sys).unwrap();
    assert_eq!(fl.l, unperturbed_floquet_matrix(&sys, &cfg.nu0()));
    let size = solver_grid(t.modes().modes);
    let w = fl.w.to_grid(size);
    let nn = fl.l.nrows();
    let eye: Vec<f64> = DMatrix::<f64>::identity(nn, nn).iter().copied().collect();
    for pt in 0..w.points() {
        assert_eq!(w.value(pt), &eye[..]);
    }
    let ver = exponent_verify(&fl, &cfg.template).unwrap();
    assert!(ver.passed);
    assert!(ver.beta_deviation_max <= 1e-14);
}

#[test]
fn perturbed_torus_reduction() {
    for kappa in [0, 1] {
        let (cfg, sys, inv) = common::reference_system(kappa, 11);
        let fd = cfg.frequency_data().unwrap();
        let problem = TorusProblem::new(&sys, &inv, &fd, &cfg.nu0(), cfg.solver.clone()).unwrap();
        let (t, _) = problem.solve(1e-3, None).unwrap();
        let fl = reduce_variational(&t, &sys).unwrap();
        assert!(fl.defect <= 1e-9);
        assert!(fl.min_singular > 1e-6);
        let ver = exponent_verify(&fl, problem.template()).unwrap();
        assert!(ver.passed);
        assert_eq!(ver.zero_count, 1);
        assert!(ver.beta_deviation_max <= 1e-8);
        assert!(ver.frozen_deviation_max <= 1e-8);
        assert!(ver.pairing_defect <= 1e-8);
        if kappa == 0 {
            // the free alpha moves with eps
            assert!(ver.alphas[0].deviation > 1e-6);
        }
        let rep = fundamental_solution_check(&t, &sys, &fl, &[vec![0.3, 1.1], vec![2.0, 5.0], vec![4.4, 0.2]], 10.0).unwrap();
        assert!(rep.max_deviation <= 1e-6, "{rep:?}");
    }
}
