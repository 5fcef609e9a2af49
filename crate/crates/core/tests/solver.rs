mod common;

use revtori::diophantine::FrequencyData;
use revtori::harness::{generate_example_system, ExperimentConfig};
use revtori::torus::{
    evaluate_embedding, fixed_point_check, newton_solve, parity_defect, solver_grid, theta_diagnostic, EmbeddingFile,
    SymmetryMode, TorusProblem,
};
use revtori::trig::{Monomial, Trig, TrigPoly};
use revtori::Error;

const PROBES: [[f64; 2]; 4] = [[0.0, 0.0], [0.3, 1.1], [2.0, 5.0], [4.4, 0.2]];

#[test]
fn unperturbed_torus_is_the_trivial_embedding() {
    let (cfg, sys, inv) = common::reference_system(0, 11);
    let fd = cfg.frequency_data().unwrap();
    let (t, log) = newton_solve(&sys, &inv, &fd, &cfg.nu0(), 0.0, &cfg.solver).unwrap();
    assert!(log.converged);
    assert!(log.newton_iterations <= 1);
    assert_eq!(t.theta, vec![0.0]);
    assert_eq!(t.nu, cfg.nu0());
    for f in t.fields() {
        assert_eq!(f.l1_norm(), 0.0);
    }
    for th in PROBES {
        let p = evaluate_embedding(&t, &th);
        assert!((p.x[0] - th[0]).abs() < 1e-15 && (p.forcing[0] - th[1]).abs() < 1e-15);
        assert!(p.y.iter().chain(&p.z).all(|v| *v == 0.0));
    }
}

#[test]
fn free_mode_converges_with_vanishing_theta() {
    for kappa in [0, 1] {
        let (cfg, sys, inv) = common::reference_system(kappa, 11);
        let fd = cfg.frequency_data().unwrap();
        let problem = TorusProblem::new(&sys, &inv, &fd, &cfg.nu0(), cfg.solver.clone()).unwrap();
        let (t, log) = problem.solve(1e-3, None).unwrap();
        assert!(log.converged);
        assert!(log.residual <= 1e-10, "{:e}", log.residual);
        assert!(log.fine_residual <= 1e-8, "{:e}", log.fine_residual);
        assert!(log.newton_iterations <= 8);
        let diag = theta_diagnostic(&t);
        assert!(diag.theta_norm <= 1e-9);
        assert!(diag.theta_residual.iter().all(|v| v.abs() <= 1e-9));
        assert!(parity_defect(&t, solver_grid(t.modes().modes)) <= 1e-9);
        let fp = fixed_point_check(&t, &inv).unwrap();
        assert!(fp.passed);
        assert_eq!(fp.found, 4);
        assert_eq!(fp.spurious, 0);
        // nu moves with eps
        let shift: f64 = t.nu.iter().zip(cfg.nu0()).map(|(a, b)| (a - b).abs()).sum();
        assert!(shift > 0.0 && shift < 1e-1);
    }
}

#[test]
fn enforced_mode_agrees_with_free_mode() {
    let (cfg, sys, inv) = common::reference_system(0, 11);
    let fd = cfg.frequency_data().unwrap();
    let (free, _) = newton_solve(&sys, &inv, &fd, &cfg.nu0(), 1e-3, &cfg.solver).unwrap();
    let mut opts = cfg.solver.clone();
    opts.mode = SymmetryMode::Enforced;
    let (enf, log) = newton_solve(&sys, &inv, &fd, &cfg.nu0(), 1e-3, &opts).unwrap();
    assert!(log.converged);
    assert_eq!(enf.theta, vec![0.0]);
    for th in PROBES {
        let a = evaluate_embedding(&free, &th).to_flat();
        let b = evaluate_embedding(&enf, &th).to_flat();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-9, "{u} vs {v}");
        }
    }
    for (u, v) in free.nu.iter().zip(&enf.nu) {
        assert!((u - v).abs() <= 1e-9);
    }
}

/// `eps (1 + 2 y + cos x)` added to the forcing angle breaks reversibility.
fn drifting_system() -> (ExperimentConfig, revtori::model::SystemFamily, revtori::model::InvolutionSpec) {
    let (cfg, sys, inv) = common::reference_system(0, 11);
    let nv = sys.dims().n_vars();
    let mut y_power = vec![0u32; nv];
    y_power[0] = 1;
    let drift = TrigPoly::new(
        1,
        2,
        nv,
        vec![
            Monomial::plain(vec![0; nv], vec![1.0], 2),
            Monomial::plain(y_power, vec![2.0], 2),
            Monomial::new(Trig::Cos, vec![1, 0], vec![0; nv], vec![1.0]),
        ],
    )
    .unwrap();
    (cfg, sys.with_drift(drift).unwrap(), inv)
}

#[test]
fn drift_shows_up_in_theta() {
    let (cfg, sys, inv) = drifting_system();
    let fd = cfg.frequency_data().unwrap();
    let eps = 1e-3;
    let (t, log) = newton_solve(&sys, &inv, &fd, &cfg.nu0(), eps, &cfg.solver).unwrap();
    assert!(log.converged);
    // the torus mean of the drift is 1
    assert!((t.theta[0] + eps).abs() <= 0.5 * eps, "{:?}", t.theta);
    let mut opts = cfg.solver.clone();
    opts.mode = SymmetryMode::Enforced;
    assert!(newton_solve(&sys, &inv, &fd, &cfg.nu0(), eps, &opts).is_err());
}

#[test]
fn resonant_frequencies_break_down() {
    let text = common::reference_text(0, 11, None).replace(&format!("{:?}", common::GOLDEN), "1.0");
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let sys = generate_example_system(&cfg).unwrap();
    let inv = cfg.involution();
    let fd = FrequencyData::new(vec![1.0], vec![1.0], vec![common::BETA0], 2.0, 0.1, 200);
    let err = newton_solve(&sys, &inv, &fd, &cfg.nu0(), 1e-3, &cfg.solver).unwrap_err();
    assert!(matches!(err, Error::SmallDivisorBreakdown { .. }), "{err}");
}

#[test]
fn solved_torus_file_round_trip() {
    let (cfg, sys, inv) = common::reference_system(1, 11);
    let fd = cfg.frequency_data().unwrap();
    let (t, _) = newton_solve(&sys, &inv, &fd, &cfg.nu0(), 2e-3, &cfg.solver).unwrap();
    let text = EmbeddingFile::from_embedding(&t).to_toml().unwrap();
    let back = EmbeddingFile::parse(&text).unwrap().build().unwrap();
    assert_eq!(back.theta, t.theta);
    assert_eq!(back.nu, t.nu);
    assert_eq!(back.eps, t.eps);
    for th in PROBES {
        assert_eq!(evaluate_embedding(&back, &th), evaluate_embedding(&t, &th));
    }
}
