use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::floquet::{exponent_verify, reduce_variational, FloquetData, VerificationReport};
use crate::model::{InvolutionSpec, SystemFamily};
use crate::torus::{fixed_point_check, ConvergenceLog, FixedPointReport, TorusEmbedding, TorusProblem};

/// Terms per series in [`sqrt_eps_fit`].
pub const DEFAULT_FIT_TERMS: usize = 3;
/// Converged records required by a fit.
pub const MIN_FIT_RECORDS: usize = 6;

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationRecord {
    pub eps: f64,
    pub nu: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_norm: f64,
    pub b_norm: f64,
    pub residual: f64,
    pub fine_residual: f64,
    pub newton_iterations: usize,
    pub spectral_defect: f64,
    /// `(re, im)` of every Floquet exponent.
    pub exponents: Vec<(f64, f64)>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_dev_max: f64,
    pub frozen_dev_max: f64,
    pub floquet_defect: f64,
    pub exponents_verified: bool,
    pub fixed_points: usize,
    pub fixed_point_deviation: f64,
    pub fixed_points_passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Breakdown {
    pub eps: f64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationResult {
    pub records: Vec<ContinuationRecord>,
    pub breakdown: Option<Breakdown>,
    /// The converged tori, one per record.
    #[serde(skip)]
    pub tori: Vec<TorusEmbedding>,
    #[serde(skip)]
    pub logs: Vec<ConvergenceLog>,
}

fn record(
    t: &TorusEmbedding,
    log: &ConvergenceLog,
    fl: &FloquetData,
    ver: &VerificationReport,
    fp: &FixedPointReport,
) -> ContinuationRecord {
    let diag = crate::torus::theta_diagnostic(t);
    ContinuationRecord {
        eps: t.eps,
        nu: t.nu.clone(),
        theta: t.theta.clone(),
        theta_norm: diag.theta_norm,
        b_norm: diag.b_norm,
        residual: log.residual,
        fine_residual: log.fine_residual,
        newton_iterations: log.newton_iterations,
        spectral_defect: log.spectral_defect,
        exponents: fl.exponents.iter().map(|z| (z.re, z.im)).collect(),
        alpha: ver.alphas.iter().map(|a| a.alpha).collect(),
        beta: ver.beta.clone(),
        beta_dev_max: ver.beta_deviation_max,
        frozen_dev_max: ver.frozen_deviation_max,
        floquet_defect: fl.defect,
        exponents_verified: ver.passed,
        fixed_points: fp.found,
        fixed_point_deviation: fp.max_deviation,
        fixed_points_passed: fp.passed,
    }
}

/// Traces tori along the schedule of `cfg`, warm-starting each solve from
/// the previous torus. The first failure ends the run and is recorded.
pub fn epsilon_continuation(cfg: &ExperimentConfig, sys: &SystemFamily, inv: &InvolutionSpec) -> Result<ContinuationResult> {
    let fd = cfg.frequency_data()?;
    let problem = TorusProblem::new(sys, inv, &fd, &cfg.nu0(), cfg.solver.clone())?;
    let mut out = ContinuationResult {
        records: Vec::new(),
        breakdown: None,
        tori: Vec::new(),
        logs: Vec::new(),
    };
    for &eps in &cfg.eps_schedule {
        let step = || -> Result<(TorusEmbedding, ConvergenceLog, ContinuationRecord)> {
            let (t, log) = problem.solve(eps, out.tori.last())?;
            let fl = reduce_variational(&t, sys)?;
            let ver = exponent_verify(&fl, problem.template())?;
            let fp = fixed_point_check(&t, inv)?;
            let rec = record(&t, &log, &fl, &ver, &fp);
            Ok((t, log, rec))
        };
        match step() {
            Ok((t, log, rec)) => {
                out.tori.push(t);
                out.logs.push(log);
                out.records.push(rec);
            }
            Err(e) => {
                out.breakdown = Some(Breakdown { eps, error: e.to_string() });
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub index: usize,
    pub terms: usize,
    pub points: usize,
    /// Coefficients in `u = sqrt(eps / eps_max)`.
    pub sqrt_coeffs: Vec<f64>,
    /// Coefficients in `v = eps / eps_max`.
    pub eps_coeffs: Vec<f64>,
    pub eps_max: f64,
    pub sqrt_residual: f64,
    pub eps_residual: f64,
    /// `sqrt_residual <= eps_residual`.
    pub passed: bool,
}

impl FitReport {
    pub fn sqrt_model(&self, eps: f64) -> f64 {
        horner(&self.sqrt_coeffs, (eps / self.eps_max).sqrt())
    }

    pub fn eps_model(&self, eps: f64) -> f64 {
        horner(&self.eps_coeffs, eps / self.eps_max)
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

fn least_squares(xs: &[f64], ys: &[f64], terms: usize) -> Result<(Vec<f64>, f64)> {
    let a = DMatrix::from_fn(xs.len(), terms, |i, j| xs[i].powi(j as i32));
    let b = DVector::from_column_slice(ys);
    let coeffs = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::NoConvergence(format!("least squares failed: {e}")))?;
    let res = (&a * &coeffs - b).norm();
    Ok((coeffs.as_slice().to_vec(), res))
}

/// Fits `values(eps)` by polynomials with `terms` coefficients in
/// `sqrt(eps)` and in `eps` and compares the residual norms.
pub fn compare_fits(index: usize, eps: &[f64], values: &[f64], terms: usize) -> Result<FitReport> {
    let mut distinct: Vec<f64> = eps.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if eps.len() != values.len() || distinct.len() < MIN_FIT_RECORDS || distinct.len() < terms {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_RECORDS.max(terms),
            got: distinct.len(),
        });
    }
    let eps_max = distinct.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let v: Vec<f64> = eps.iter().map(|e| e / eps_max).collect();
    let u: Vec<f64> = v.iter().map(|x| x.sqrt()).collect();
    let (sqrt_coeffs, sqrt_residual) = least_squares(&u, values, terms)?;
    let (eps_coeffs, eps_residual) = least_squares(&v, values, terms)?;
    Ok(FitReport {
        index,
        terms,
        points: eps.len(),
        sqrt_coeffs,
        eps_coeffs,
        eps_max,
        sqrt_residual,
        eps_residual,
        passed: sqrt_residual <= eps_residual,
    })
}

/// Fits `alpha'_k` over the converged records.
pub fn sqrt_eps_fit(result: &ContinuationResult, k: usize) -> Result<FitReport> {
    let recs: Vec<&ContinuationRecord> = result.records.iter().filter(|r| k < r.alpha.len()).collect();
    if recs.is_empty() && result.records.first().is_some_and(|r| k >= r.alpha.len()) {
        return Err(Error::BadDims(format!("alpha index {k} out of range")));
    }
    let eps: Vec<f64> = recs.iter().map(|r| r.eps).collect();
    let values: Vec<f64> = recs.iter().map(|r| r.alpha[k]).collect();
    compare_fits(k, &eps, &values, DEFAULT_FIT_TERMS)
}
