#![allow(dead_code)]

use revtori::harness::{generate_example_system, ExperimentConfig};
use revtori::model::{InvolutionSpec, SystemFamily};

pub const BETA0: f64 = std::f64::consts::SQRT_2;
pub const GOLDEN: f64 = 1.618033988749895;
/// Truncation used by the integration tests, below the default for speed.
pub const TEST_MODES: usize = 8;

/// (n, m, p, N) = (1, 1, 2, 1), one real and one imaginary pair.
pub fn reference_text(kappa: usize, seed: u64, schedule: Option<&[f64]>) -> String {
    reference_text_with_modes(kappa, seed, schedule, TEST_MODES)
}

pub fn reference_text_with_modes(kappa: usize, seed: u64, schedule: Option<&[f64]>, modes: usize) -> String {
    let mut s = format!(
        "n = 1\nm = 1\np = 2\nN = 1\ns = {}\nseed = {seed}\n",
        3 + kappa
    );
    if let Some(e) = schedule {
        let items: Vec<String> = e.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&format!("eps_schedule = [{}]\n", items.join(", ")));
    }
    s.push_str(&format!(
        "[template]\nd1 = 1\nd2 = 1\nd3 = 0\nalpha = [0.7]\nbeta = [{BETA0:?}]\nfrozen = {}\n",
        if kappa == 1 { "[0]" } else { "[]" }
    ));
    s.push_str(&format!("[frequencies]\nomega = [1.0]\nOmega = [{GOLDEN:?}]\ntau = 2.0\n"));
    s.push_str(&format!("[solver]\nmodes = {modes}\n"));
    s
}

pub fn reference_config(kappa: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::parse(&reference_text(kappa, seed, None)).unwrap()
}

pub fn reference_system(kappa: usize, seed: u64) -> (ExperimentConfig, SystemFamily, InvolutionSpec) {
    let cfg = reference_config(kappa, seed);
    let sys = generate_example_system(&cfg).unwrap();
    let inv = cfg.involution();
    (cfg, sys, inv)
}
