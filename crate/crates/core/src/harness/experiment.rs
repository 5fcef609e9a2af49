use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::{check_hypotheses, epsilon_continuation, generate_example_system, integrate_and_validate, sqrt_eps_fit};
use super::{ContinuationResult, ExperimentConfig, FitReport, HypothesisReport, ValidationReport};
use crate::error::Result;
use crate::model::checks::{order_condition_check, reversibility_residual, SamplePlan, DEFAULT_SAMPLES, DEFAULT_SEED};
use crate::torus::{embedding_grid, EmbeddingFile};

/// Bounds asserted on every converged record.
pub const THETA_TOL: f64 = 1e-9;
pub const RIGIDITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationSummary {
    pub eps: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub stages: Vec<StageOutcome>,
    pub hypotheses: Option<HypothesisReport>,
    pub continuation: Option<ContinuationResult>,
    pub validation: Vec<ValidationSummary>,
    pub fits: Vec<FitReport>,
    pub passed: bool,
    pub elapsed_seconds: f64,
}

impl ExperimentSummary {
    fn stage(&mut self, stage: &'static str, passed: bool, detail: impl Into<String>) {
        self.stages.push(StageOutcome {
            stage,
            passed,
            detail: detail.into(),
        });
    }
}

/// The continuation table, one row per converged record.
pub fn continuation_csv(result: &ContinuationResult) -> String {
    let mut s = String::new();
    let (ns, na) = result.records.first().map_or((0, 0), |r| (r.nu.len(), r.alpha.len()));
    s.push_str("eps");
    for i in 0..ns {
        let _ = write!(s, ",nu_{}", i + 1);
    }
    s.push_str(",theta_norm,residual");
    for k in 0..na {
        let _ = write!(s, ",alpha_{}", k + 1);
    }
    s.push_str(",beta_dev_max\n");
    for r in &result.records {
        let _ = write!(s, "{:.17e}", r.eps);
        for v in &r.nu {
            let _ = write!(s, ",{v:.17e}");
        }
        let _ = write!(s, ",{:.17e},{:.17e}", r.theta_norm, r.residual);
        for v in &r.alpha {
            let _ = write!(s, ",{v:.17e}");
        }
        let _ = writeln!(s, ",{:.17e}", r.beta_dev_max);
    }
    s
}

fn fits_csv(result: &ContinuationResult, fits: &[FitReport]) -> String {
    let mut s = String::from("eps,sqrt_eps");
    for f in fits {
        let k = f.index + 1;
        let _ = write!(s, ",alpha_{k},sqrt_fit_{k},eps_fit_{k}");
    }
    s.push('\n');
    for r in &result.records {
        let _ = write!(s, "{:.17e},{:.17e}", r.eps, r.eps.sqrt());
        for f in fits {
            let _ = write!(s, ",{:.17e},{:.17e},{:.17e}", r.alpha[f.index], f.sqrt_model(r.eps), f.eps_model(r.eps));
        }
        s.push('\n');
    }
    s
}

fn section_csv(t: &crate::torus::TorusEmbedding, size: usize) -> String {
    let d = t.dims;
    let grid = embedding_grid(t, size);
    let mut s = String::new();
    for a in 0..d.torus_dim() {
        let _ = write!(s, "theta_{},", a + 1);
    }
    let names: Vec<String> = (0..d.n)
        .map(|i| format!("x_{}", i + 1))
        .chain((0..d.m).map(|i| format!("y_{}", i + 1)))
        .chain((0..2 * d.p).map(|i| format!("z_{}", i + 1)))
        .chain((0..d.forcing).map(|i| format!("X_{}", i + 1)))
        .collect();
    s.push_str(&names.join(","));
    s.push('\n');
    for pt in 0..grid.points() {
        let angles = grid.angles(pt);
        let row: Vec<String> = angles.iter().chain(grid.value(pt)).map(|v| format!("{v:.17e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

/// Runs generate, check, hypotheses, continuation, validation and fits for
/// the configuration at `config`, writing artifacts into `out_dir`.
pub fn run_experiment(config: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<ExperimentSummary> {
    let cfg = ExperimentConfig::load(config)?;
    run_config(&cfg, out_dir.as_ref())
}

pub(crate) fn run_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut sum = ExperimentSummary {
        seed: cfg.seed,
        config: cfg.clone(),
        stages: Vec::new(),
        hypotheses: None,
        continuation: None,
        validation: Vec::new(),
        fits: Vec::new(),
        passed: false,
        elapsed_seconds: 0.0,
    };
    let finish = |mut sum: ExperimentSummary| -> Result<ExperimentSummary> {
        sum.passed = !sum.stages.is_empty() && sum.stages.iter().all(|s| s.passed);
        sum.elapsed_seconds = start.elapsed().as_secs_f64();
        let json = serde_json::to_string_pretty(&sum).map_err(|e| crate::Error::Parse(e.to_string()))?;
        write_atomic(out_dir, "summary.json", &json)?;
        Ok(sum)
    };

    let sys = match generate_example_system(cfg) {
        Ok(s) => s,
        Err(e) => {
            sum.stage("generate", false, e.to_string());
            return finish(sum);
        }
    };
    sum.stage("generate", true, "");
    let inv = cfg.involution();

    let rev = reversibility_residual(&sys, &inv, &SamplePlan::Random { count: DEFAULT_SAMPLES, seed: DEFAULT_SEED })?;
    let order = order_condition_check(&sys, &inv);
    let worst = rev.identities.iter().fold(0.0f64, |a, e| a.max(e.defect));
    sum.stage(
        "check",
        rev.passed && order.passed,
        format!("max reversibility defect {worst:.3e}, order conditions {}", if order.passed { "met" } else { "violated" }),
    );

    match check_hypotheses(cfg, &sys, &inv) {
        Ok(h) => {
            sum.hypotheses = Some(h);
            sum.stage("hypotheses", true, "");
        }
        Err(e) => {
            sum.stage("hypotheses", false, e.to_string());
            return finish(sum);
        }
    }

    let result = match epsilon_continuation(cfg, &sys, &inv) {
        Ok(r) => r,
        Err(e) => {
            sum.stage("continuation", false, e.to_string());
            return finish(sum);
        }
    };
    let detail = match &result.breakdown {
        Some(b) => format!("{} converged records, breakdown at eps = {:e}: {}", result.records.len(), b.eps, b.error),
        None => format!("{} converged records", result.records.len()),
    };
    sum.stage("continuation", !result.records.is_empty(), detail);

    let bad: Vec<String> = result
        .records
        .iter()
        .filter(|r| {
            r.theta_norm > THETA_TOL
                || r.b_norm > THETA_TOL
                || r.beta_dev_max > RIGIDITY_TOL
                || r.frozen_dev_max > RIGIDITY_TOL
                || !r.exponents_verified
                || !r.fixed_points_passed
        })
        .map(|r| format!("{:e}", r.eps))
        .collect();
    sum.stage("floquet", bad.is_empty(), if bad.is_empty() { String::new() } else { format!("assertions failed at eps = {}", bad.join(", ")) });

    let fd = cfg.frequency_data()?;
    let mut all_ok = true;
    for t in &result.tori {
        let (dev, ok) = match integrate_and_validate(t, &sys, &fd, cfg.validation_time) {
            Ok(ValidationReport { max_deviation, passed, .. }) => (max_deviation, passed),
            Err(_) => (f64::INFINITY, false),
        };
        all_ok &= ok;
        sum.validation.push(ValidationSummary {
            eps: t.eps,
            max_deviation: dev,
            passed: ok,
        });
    }
    sum.stage("validation", all_ok, "");

    let free: Vec<usize> = (0..cfg.template.alpha.len()).filter(|k| !cfg.template.frozen.contains(k)).collect();
    let mut fit_errors = Vec::new();
    for &k in &free {
        match sqrt_eps_fit(&result, k) {
            Ok(f) => sum.fits.push(f),
            Err(e) => fit_errors.push(format!("alpha_{}: {e}", k + 1)),
        }
    }
    let fits_ok = fit_errors.is_empty() && sum.fits.iter().all(|f| f.passed);
    let detail: Vec<String> = sum
        .fits
        .iter()
        .map(|f| format!("alpha_{}: sqrt-eps residual {:.3e}, eps residual {:.3e}", f.index + 1, f.sqrt_residual, f.eps_residual))
        .chain(fit_errors)
        .collect();
    sum.stage("fits", fits_ok, detail.join("; "));

    write_atomic(out_dir, "continuation.csv", &continuation_csv(&result))?;
    write_atomic(out_dir, "fits.csv", &fits_csv(&result, &sum.fits))?;
    if let Some(t) = result.tori.last() {
        write_atomic(out_dir, "torus.toml", &EmbeddingFile::from_embedding(t).to_toml()?)?;
        write_atomic(out_dir, "torus_section.csv", &section_csv(t, 32))?;
    }
    sum.continuation = Some(result);
    finish(sum)
}
