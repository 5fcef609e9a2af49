mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use revtori::model::checks::{involution_validate, order_condition_check, reversibility_residual, SamplePlan};
use revtori::model::{apply_involution, context_classify, wrap_angle, Context, Dims, InvolutionSpec, PhasePoint};
use revtori::ode::{dopri5, OdeOptions};
use revtori::torus::submersion_check;
use revtori::Error;

fn householder_block(v: &[f64]) -> DMatrix<f64> {
    let v = DVector::from_column_slice(v);
    let mut k = DMatrix::<f64>::zeros(6, 6);
    let h = DMatrix::<f64>::identity(3, 3) - &v * v.transpose() * (2.0 / v.norm_squared());
    k.view_mut((0, 0), (3, 3)).copy_from(&h);
    k[(3, 3)] = 1.0;
    k[(4, 4)] = -1.0;
    k[(5, 5)] = -1.0;
    k
}

proptest! {
    #[test]
    fn householder_signature_matches_eigensolver(v in prop::collection::vec(-1.0f64..1.0, 3)) {
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        let k = householder_block(&v);
        let eig = k.clone().symmetric_eigen();
        let plus = eig.eigenvalues.iter().filter(|e| (*e - 1.0).abs() < 1e-8).count();
        let minus = eig.eigenvalues.iter().filter(|e| (*e + 1.0).abs() < 1e-8).count();
        let dims = Dims::new(1, 1, 3, 1, 4);
        let rep = involution_validate(&InvolutionSpec::new(k, dims).unwrap()).unwrap();
        prop_assert!(rep.passed);
        prop_assert_eq!((rep.plus, rep.minus), (plus, minus));
        prop_assert_eq!((plus, minus), (3, 3));
    }

    #[test]
    fn involution_is_exact_on_reduced_angles(
        x in -10.0f64..10.0, y in -1.0f64..1.0, z in prop::collection::vec(-1.0f64..1.0, 4), big_x in -10.0f64..10.0,
    ) {
        let dims = Dims::new(1, 1, 2, 1, 3);
        let inv = InvolutionSpec::standard(dims);
        let a = PhasePoint { x: vec![wrap_angle(x)], y: vec![y], z: z.clone(), forcing: vec![wrap_angle(big_x)] };
        let b = apply_involution(&inv, &apply_involution(&inv, &a).unwrap()).unwrap();
        prop_assert!((b.x[0] - a.x[0]).abs() < 1e-15 || (b.x[0] - a.x[0]).abs() > 6.28);
        prop_assert_eq!(b.y, a.y);
        prop_assert_eq!(b.z, a.z);
    }
}

#[test]
fn identity_has_wrong_signature() {
    let dims = Dims::new(1, 1, 1, 1, 2);
    let inv = InvolutionSpec::new(DMatrix::identity(2, 2), dims).unwrap();
    assert!(matches!(involution_validate(&inv), Err(Error::WrongSignature { plus: 2, minus: 0, .. })));
}

#[test]
fn half_period_angle_is_fixed() {
    let dims = Dims::new(1, 1, 2, 1, 3);
    let inv = InvolutionSpec::standard(dims);
    let mut a = PhasePoint::zeros(&dims);
    assert_eq!(apply_involution(&inv, &a).unwrap(), a);
    a.x[0] = PI;
    let b = apply_involution(&inv, &a).unwrap();
    assert!((b.x[0] - PI).abs() < 1e-15);
}

#[test]
fn generated_systems_pass_model_checks() {
    for seed in [1, 11, 2024] {
        for kappa in [0, 1] {
            let (_, sys, inv) = common::reference_system(kappa, seed);
            let rep = reversibility_residual(&sys, &inv, &SamplePlan::Random { count: 1000, seed }).unwrap();
            for e in &rep.identities {
                assert!(e.defect <= 1e-12, "{} defect {:e}", e.name, e.defect);
            }
            assert!(order_condition_check(&sys, &inv).passed);
            let (p, q) = sys.dims().fix_dims();
            let label = context_classify(p, q, sys.dims().torus_dim()).unwrap();
            assert_eq!(label.context, Context::Context2);
        }
    }
}

#[test]
fn generated_parameter_map_is_an_identity_block() {
    let (cfg, sys, inv) = common::reference_system(0, 11);
    let rep = submersion_check(&sys, &inv, &cfg.nu0(), &[]).unwrap();
    assert_eq!((rep.rows, rep.rank), (3, 3));
    for r in 0..3 {
        for c in 0..3 {
            let expect = if r == c { 1.0 } else { 0.0 };
            assert!((rep.jacobian[r * 3 + c] - expect).abs() < 1e-8);
        }
    }
    assert!((rep.sigma_min - 1.0).abs() < 1e-8);

    let (cfg, sys, inv) = common::reference_system(1, 11);
    let rep = submersion_check(&sys, &inv, &cfg.nu0(), &cfg.template.frozen).unwrap();
    assert_eq!((rep.rows, rep.rank), (4, 4));
    assert!(rep.passed);
}

/// `G(a(-t))` is again a solution: integrate backwards from `a0`, map by `G`
/// and compare with the forward solution from `G(a0)`.
#[test]
fn reflected_backward_solution_is_a_solution() {
    let (_, sys, inv) = common::reference_system(0, 11);
    let d = *sys.dims();
    let (nu, eps) = (vec![0.01, -0.02, 0.03], 0.05);
    let a0 = PhasePoint { x: vec![0.4], y: vec![0.1], z: vec![0.05, -0.1, 0.2, 0.03], forcing: vec![1.3] };
    let times = [0.5, 1.0, 2.0];
    let opts = OdeOptions::default();
    let back = dopri5(
        |_, y, dy| {
            let v = sys.vector_field(y, &nu, eps, &[0.0]);
            dy.iter_mut().zip(v).for_each(|(o, v)| *o = -v);
        },
        0.0,
        &a0.to_flat(),
        &times,
        &opts,
    )
    .unwrap();
    let g0 = apply_involution(&inv, &a0).unwrap();
    let fwd = dopri5(|_, y, dy| dy.copy_from_slice(&sys.vector_field(y, &nu, eps, &[0.0])), 0.0, &g0.to_flat(), &times, &opts).unwrap();
    for (b, f) in back.iter().zip(&fwd) {
        let gb = apply_involution(&inv, &PhasePoint::from_flat(&d, b)).unwrap().to_flat();
        let f = PhasePoint::from_flat(&d, f);
        let fr = PhasePoint {
            x: f.x.iter().map(|v| wrap_angle(*v)).collect(),
            forcing: f.forcing.iter().map(|v| wrap_angle(*v)).collect(),
            ..f
        }
        .to_flat();
        for (u, v) in gb.iter().zip(&fr) {
            let diff = (u - v).abs();
            assert!(diff.min((diff - 2.0 * PI).abs()) < 1e-9, "{u} vs {v}");
        }
    }
}
