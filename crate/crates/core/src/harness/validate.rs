use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diophantine::FrequencyData;
use crate::error::{Error, Result};
use crate::model::SystemFamily;
use crate::ode::{dopri5, OdeOptions};
use crate::torus::{evaluate_embedding, TorusEmbedding};

pub const VALIDATION_SEEDS: usize = 20;
pub const VALIDATION_TOL: f64 = 1e-6;
const OUTPUTS: usize = 40;
const SEED: u64 = 0x70_5eed;

#[derive(Clone, Debug, Serialize)]
pub struct SeedDeviation {
    pub theta0: Vec<f64>,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub time: f64,
    pub seeds: Vec<SeedDeviation>,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Integrates the full system from points on the torus and compares each
/// trajectory with the embedding at the rigidly rotated angle.
pub fn integrate_and_validate(t: &TorusEmbedding, sys: &SystemFamily, fd: &FrequencyData, time: f64) -> Result<ValidationReport> {
    if !(time > 0.0) {
        return Err(Error::IntegrationFailure("integration time must be positive".into()));
    }
    let freq = fd.torus_freq();
    if freq.len() != t.dims.torus_dim() || t.dims != *sys.dims() {
        return Err(Error::DimensionMismatch("torus, system and frequencies disagree".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let times: Vec<f64> = (1..=OUTPUTS).map(|k| time * k as f64 / OUTPUTS as f64).collect();
    let opts = OdeOptions::default();
    let mut seeds = Vec::with_capacity(VALIDATION_SEEDS);
    for _ in 0..VALIDATION_SEEDS {
        let theta0: Vec<f64> = freq.iter().map(|_| rng.random_range(0.0..TAU)).collect();
        let start = evaluate_embedding(t, &theta0).to_flat();
        let traj = dopri5(
            |_, y, dy| dy.copy_from_slice(&sys.vector_field(y, &t.nu, t.eps, &t.theta)),
            0.0,
            &start,
            &times,
            &opts,
        )?;
        let mut worst = 0.0f64;
        for (&tm, state) in times.iter().zip(&traj) {
            let theta: Vec<f64> = theta0.iter().zip(&freq).map(|(a, w)| a + w * tm).collect();
            let expect = evaluate_embedding(t, &theta).to_flat();
            let dev = state.iter().zip(&expect).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
            worst = worst.max(dev);
        }
        seeds.push(SeedDeviation { theta0, max_deviation: worst });
    }
    let max_deviation = seeds.iter().fold(0.0f64, |a, s| a.max(s.max_deviation));
    Ok(ValidationReport {
        time,
        seeds,
        max_deviation,
        passed: max_deviation <= VALIDATION_TOL,
    })
}
