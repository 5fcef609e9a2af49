//! Browser bindings: a Diophantine scan, a small torus solve and the
//! spectrum of random matrices anti-commuting with an involution.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use revtori::diophantine::{best_gamma_estimate, diophantine_verify, resonance_scan, FrequencyData, Resonance};
use revtori::floquet::{anticommuting_spectrum_classify, pairing_defect, random_anticommuting, reduce_variational_with, FloquetOptions, SpectrumTemplate};
use revtori::harness::{generate_example_system, ExperimentConfig};
use revtori::linalg::{eigenvalues, numerical_rank};
use revtori::torus::{evaluate_embedding, TorusProblem};

const SECTION_POINTS: usize = 96;
const NEAR_LIMIT: usize = 12;
/// Reduction residual accepted at the coarse demo truncations.
const FLOQUET_ACCEPT: f64 = 1e-6;

type Out = Result<String, String>;

fn js<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(v: &T) -> Out {
    serde_json::to_string(v).map_err(js)
}

fn export(r: Out) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[derive(Serialize)]
struct ScanOutput {
    gamma: f64,
    window_size: usize,
    minimizer: Option<Resonance>,
    near: Vec<Resonance>,
}

/// Best gamma and the closest resonances for one set of frequencies.
#[wasm_bindgen]
pub fn diophantine_scan(omega: Vec<f64>, forcing: Vec<f64>, beta0: Vec<f64>, tau: f64, order_bound: u32) -> Result<String, JsError> {
    export(scan(omega, forcing, beta0, tau, order_bound))
}

fn scan(omega: Vec<f64>, forcing: Vec<f64>, beta0: Vec<f64>, tau: f64, order_bound: u32) -> Out {
    let mut fd = FrequencyData::new(omega, forcing, beta0, tau, 0.0, order_bound);
    fd.gamma = best_gamma_estimate(&fd).map_err(js)?;
    let rep = diophantine_verify(&fd).map_err(js)?;
    let mut near: Vec<Resonance> = resonance_scan(&fd, 4.0 * fd.gamma)
        .map_err(js)?
        .into_iter()
        .filter(Resonance::is_canonical)
        .collect();
    near.truncate(NEAR_LIMIT);
    to_json(&ScanOutput {
        gamma: fd.gamma,
        window_size: rep.window_size,
        minimizer: rep.minimizer,
        near,
    })
}

#[derive(Serialize)]
struct SpectrumOutput {
    matrix: Vec<Vec<f64>>,
    eigenvalues: Vec<(f64, f64)>,
    kernel: usize,
    required_kernel: usize,
    pairing_defect: f64,
    classification: Result<SpectrumTemplate, String>,
}

/// Spectrum of a random matrix anti-commuting with `diag(I_P, -I_Q)`.
#[wasm_bindgen]
pub fn anticommuting_spectrum(p_mult: usize, q_mult: usize, seed: u64) -> Result<String, JsError> {
    export(spectrum(p_mult, q_mult, seed))
}

fn spectrum(p_mult: usize, q_mult: usize, seed: u64) -> Out {
    let n = p_mult + q_mult;
    if n == 0 || n > 16 {
        return Err("P + Q must be between 1 and 16".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = random_anticommuting(p_mult, q_mult, &mut rng);
    let k = DMatrix::from_fn(n, n, |i, j| if i != j { 0.0 } else if i < p_mult { 1.0 } else { -1.0 });
    let ev = eigenvalues(&l);
    to_json(&SpectrumOutput {
        matrix: l.row_iter().map(|r| r.iter().copied().collect()).collect(),
        eigenvalues: ev.iter().map(|z| (z.re, z.im)).collect(),
        kernel: n - numerical_rank(&l, 1e-10),
        required_kernel: p_mult.abs_diff(q_mult),
        pairing_defect: pairing_defect(&ev),
        classification: anticommuting_spectrum_classify(&l, &k).map_err(|e| e.to_string()),
    })
}

#[derive(Serialize)]
struct SolveOutput {
    residual: f64,
    residuals: Vec<f64>,
    newton_iterations: usize,
    theta: Vec<f64>,
    nu: Vec<f64>,
    exponents: Vec<(f64, f64)>,
    /// `(theta_x, y, z_1, z_3)` along `theta_X = 0`.
    section: Vec<[f64; 4]>,
}

/// Solves the generated reference system `(n, m, p, N) = (1, 1, 2, 1)` at
/// one eps with `modes` Fourier modes per angle.
#[wasm_bindgen]
pub fn solve_reference(seed: u64, eps: f64, modes: usize, frozen: bool) -> Result<String, JsError> {
    export(solve(seed, eps, modes, frozen))
}

fn solve(seed: u64, eps: f64, modes: usize, frozen: bool) -> Out {
    if !(1..=8).contains(&modes) {
        return Err("modes must be between 1 and 8".into());
    }
    let text = format!(
        "n = 1\nm = 1\np = 2\nN = 1\ns = {}\nseed = {seed}\n\
         [template]\nd1 = 1\nd2 = 1\nd3 = 0\nalpha = [0.7]\nbeta = [{:?}]\nfrozen = {}\n\
         [frequencies]\nomega = [1.0]\nOmega = [{:?}]\ntau = 2.0\norder_bound = 40\n\
         [solver]\nmodes = {modes}\ntol = 1e-8\nfloquet_accept = {FLOQUET_ACCEPT:e}\n",
        if frozen { 4 } else { 3 },
        std::f64::consts::SQRT_2,
        if frozen { "[0]" } else { "[]" },
        (1.0 + 5f64.sqrt()) / 2.0,
    );
    let cfg = ExperimentConfig::parse(&text).map_err(js)?;
    let sys = generate_example_system(&cfg).map_err(js)?;
    let inv = cfg.involution();
    let fd = cfg.frequency_data().map_err(js)?;
    let problem = TorusProblem::new(&sys, &inv, &fd, &cfg.nu0(), cfg.solver.clone()).map_err(js)?;
    let (t, log) = problem.solve(eps, None).map_err(js)?;
    let opts = FloquetOptions {
        accept: FLOQUET_ACCEPT,
        ..FloquetOptions::default()
    };
    let fl = reduce_variational_with(&t, &sys, &opts).map_err(js)?;
    let section = (0..SECTION_POINTS)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / SECTION_POINTS as f64;
            let p = evaluate_embedding(&t, &[a, 0.0]);
            [a, p.y[0], p.z[0], p.z[2]]
        })
        .collect();
    to_json(&SolveOutput {
        residual: log.residual,
        residuals: log.iterations.iter().map(|r| r.residual).collect(),
        newton_iterations: log.newton_iterations,
        theta: t.theta.clone(),
        nu: t.nu.clone(),
        exponents: fl.exponents.iter().map(|z| (z.re, z.im)).collect(),
        section,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_golden_pair() {
        let out: serde_json::Value = serde_json::from_str(&scan(vec![1.0], vec![1.618033988749895], vec![], 1.5, 50).unwrap()).unwrap();
        assert!(out["gamma"].as_f64().unwrap() > 0.1);
        assert!(!out["near"].as_array().unwrap().is_empty());
    }

    #[test]
    fn spectrum_kernel() {
        let out: serde_json::Value = serde_json::from_str(&spectrum(3, 1, 7).unwrap()).unwrap();
        assert!(out["kernel"].as_u64().unwrap() >= 2);
        assert!(out["classification"]["Err"].is_string());
        let out: serde_json::Value = serde_json::from_str(&spectrum(2, 2, 7).unwrap()).unwrap();
        assert_eq!(out["kernel"], 0);
        assert!(out["pairing_defect"].as_f64().unwrap() < 1e-10);
    }

    #[test]
    fn small_solve() {
        let out: serde_json::Value = serde_json::from_str(&solve(11, 3e-3, 5, false).unwrap()).unwrap();
        assert!(out["residual"].as_f64().unwrap() < 1e-8);
        assert_eq!(out["section"].as_array().unwrap().len(), SECTION_POINTS);
        assert_eq!(out["exponents"].as_array().unwrap().len(), 5);
    }
}
