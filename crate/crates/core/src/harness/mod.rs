//! Example systems, epsilon continuation, fits, integration cross-checks and
//! the experiment pipeline.

mod continuation;
mod experiment;
mod generate;
mod validate;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use continuation::{epsilon_continuation, sqrt_eps_fit, Breakdown, ContinuationRecord, ContinuationResult, FitReport, DEFAULT_FIT_TERMS};
pub use experiment::{continuation_csv, run_experiment, ExperimentSummary, StageOutcome};
pub use generate::generate_example_system;
pub use validate::{integrate_and_validate, SeedDeviation, ValidationReport, VALIDATION_SEEDS, VALIDATION_TOL};

use crate::diophantine::{best_gamma_estimate, diophantine_verify, DiophantineReport, FrequencyData, DEFAULT_ORDER_BOUND};
use crate::error::{Error, Result};
use crate::floquet::SpectrumTemplate;
use crate::model::{Dims, InvolutionSpec, SystemFamily};
use crate::torus::{submersion_check, SolverOptions, SubmersionReport};

/// Hypothesis names used in gating errors.
pub const PARAMETER_COUNT: &str = "parameter count s >= n+m+d2+d3+kappa";
pub const XI_VANISHES: &str = "Xi(0, nu0) = 0";
pub const DIOPHANTINE: &str = "Diophantine condition";
pub const SUBMERSIVITY: &str = "submersivity of the parameter map at nu0";

/// Tolerance for `Xi(0, nu0) = 0`.
pub const XI_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySpec {
    pub omega: Vec<f64>,
    #[serde(rename = "Omega")]
    pub forcing: Vec<f64>,
    pub tau: f64,
    /// Defaults to the best constant over the verification window.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_order_bound")]
    pub order_bound: u32,
}

fn default_order_bound() -> u32 {
    DEFAULT_ORDER_BOUND
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorOptions {
    /// Random monomials per output component of each perturbation map.
    pub terms: usize,
    pub amplitude: f64,
    /// Largest total degree in `(y, z)`.
    pub max_degree: u32,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            terms: 3,
            amplitude: 1.0,
            max_degree: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub forcing: usize,
    pub s: usize,
    pub seed: u64,
    pub template: SpectrumTemplate,
    pub frequencies: FrequencySpec,
    #[serde(default = "default_schedule")]
    pub eps_schedule: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub generator: GeneratorOptions,
    /// Integration time of the trajectory cross-check.
    #[serde(default = "default_validation_time")]
    pub validation_time: f64,
}

/// `0` followed by `1e-5 * 2^k` up to `1e-2`.
pub fn default_schedule() -> Vec<f64> {
    let mut v = vec![0.0];
    let mut e = 1e-5;
    while e <= 1e-2 {
        v.push(e);
        e *= 2.0;
    }
    v
}

fn default_validation_time() -> f64 {
    10.0
}

impl ExperimentConfig {
    /// Parses and validates a TOML configuration.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.solver.frozen = cfg.template.frozen.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.n, self.m, self.p, self.forcing, self.s)
    }

    /// `n + m + d2 + d3 + kappa`.
    pub fn required_parameters(&self) -> usize {
        let t = &self.template;
        self.n + self.m + t.d2 + t.d3 + t.kappa()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.forcing == 0 {
            return Err(Error::BadDims("n, p and N must be positive".into()));
        }
        if self.template.p() != self.p {
            return Err(Error::TemplateInfeasible {
                got: self.template.p(),
                p: self.p,
            });
        }
        self.template.validate()?;
        if self.s < self.required_parameters() {
            return Err(Error::HypothesisViolation {
                hypothesis: PARAMETER_COUNT,
                detail: format!("s = {} but {} parameters are required", self.s, self.required_parameters()),
            });
        }
        let f = &self.frequencies;
        if f.omega.len() != self.n || f.forcing.len() != self.forcing {
            return Err(Error::DimensionMismatch("omega must have n entries and Omega N entries".into()));
        }
        let sched = &self.eps_schedule;
        if sched.first() != Some(&0.0) {
            return Err(Error::BadDims("eps_schedule must start at 0".into()));
        }
        if sched.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadDims("eps_schedule must be strictly ascending".into()));
        }
        if !(self.validation_time > 0.0) {
            return Err(Error::BadDims("validation_time must be positive".into()));
        }
        if self.solver.frozen != self.template.frozen {
            return Err(Error::BadDims("solver.frozen must match template.frozen".into()));
        }
        Ok(())
    }

    /// Frequency data with `beta0` taken from the template and `gamma`
    /// defaulting to the best constant over the window.
    pub fn frequency_data(&self) -> Result<FrequencyData> {
        let f = &self.frequencies;
        let mut fd = FrequencyData::new(f.omega.clone(), f.forcing.clone(), self.template.beta.clone(), f.tau, 1.0, f.order_bound);
        fd.gamma = match f.gamma {
            Some(g) => g,
            None => best_gamma_estimate(&fd)?,
        };
        Ok(fd)
    }

    pub fn nu0(&self) -> Vec<f64> {
        vec![0.0; self.s]
    }

    /// The involution used by generated systems, `K = diag(I_p, -I_p)`.
    pub fn involution(&self) -> InvolutionSpec {
        InvolutionSpec::standard(self.dims())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub parameters: usize,
    pub required_parameters: usize,
    pub xi_at_nu0: f64,
    pub diophantine: DiophantineReport,
    pub submersion: SubmersionReport,
}

/// Machine-checks the four hypotheses of the existence result. Fails with
/// the first one violated.
pub fn check_hypotheses(cfg: &ExperimentConfig, sys: &SystemFamily, inv: &InvolutionSpec) -> Result<HypothesisReport> {
    let nu0 = cfg.nu0();
    let required = cfg.required_parameters();
    if sys.dims().s < required {
        return Err(Error::HypothesisViolation {
            hypothesis: PARAMETER_COUNT,
            detail: format!("s = {} but {required} parameters are required", sys.dims().s),
        });
    }
    let xi = sys.xi_at(&vec![0.0; sys.dims().m], &nu0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if xi > XI_TOL {
        return Err(Error::HypothesisViolation {
            hypothesis: XI_VANISHES,
            detail: format!("max |Xi(0, nu0)| = {xi:.3e}"),
        });
    }
    let fd = cfg.frequency_data()?;
    let dio = diophantine_verify(&fd)?;
    if !dio.passed {
        return Err(Error::HypothesisViolation {
            hypothesis: DIOPHANTINE,
            detail: format!(
                "margin {:.3e} at {:?} (gamma {:.3e}, tau {}, order {})",
                dio.min_margin, dio.minimizer, fd.gamma, fd.tau, fd.order_bound
            ),
        });
    }
    let sub = submersion_check(sys, inv, &nu0, &cfg.template.frozen)?;
    if !sub.passed {
        return Err(Error::HypothesisViolation {
            hypothesis: SUBMERSIVITY,
            detail: format!("rank {} of {} rows, smallest singular value {:.3e}", sub.rank, sub.rows, sub.sigma_min),
        });
    }
    Ok(HypothesisReport {
        parameters: sys.dims().s,
        required_parameters: required,
        xi_at_nu0: xi,
        diophantine: dio,
        submersion: sub,
    })
}
