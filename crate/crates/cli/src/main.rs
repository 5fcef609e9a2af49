use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use revtori::diophantine::{best_gamma_estimate, diophantine_verify, resonance_scan, FrequencyData, DEFAULT_ORDER_BOUND};
use revtori::floquet::{anticommuting_spectrum_classify, exponent_verify, reduce_variational, SpectrumTemplate};
use revtori::harness::{continuation_csv, epsilon_continuation, generate_example_system, run_experiment, ExperimentConfig};
use revtori::model::checks::{involution_validate, order_condition_check, reversibility_residual, SamplePlan, DEFAULT_SAMPLES, DEFAULT_SEED};
use revtori::model::{context_classify, SystemDefinition};
use revtori::torus::{fixed_point_check, newton_solve, theta_diagnostic, EmbeddingFile, SolverOptions, SymmetryMode};

#[derive(Parser)]
#[command(name = "revtori", version, about = "Reducible invariant tori of forced reversible systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a system file: involution, reversibility identities, order conditions, context.
    Check {
        system: PathBuf,
        /// Number of random sample points.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Verify the Diophantine condition for the frequencies in an experiment or frequency file.
    Diophantine {
        file: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        /// Defaults to the largest admissible value on the window.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        order_bound: Option<u32>,
        /// Near-resonance list threshold as a multiple of gamma.
        #[arg(long, default_value_t = 10.0)]
        near: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the example system generated from an experiment config.
    Generate {
        config: PathBuf,
        #[arg(short, long, default_value = "system.toml")]
        out: PathBuf,
    },
    /// Solve for the invariant torus of a system file at one eps.
    Solve {
        system: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Comma separated, zeros by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        nu0: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Free)]
        mode: Mode,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        modes: Option<usize>,
        /// Indices of real parts held at their unperturbed values.
        #[arg(long, value_delimiter = ',')]
        frozen: Vec<usize>,
        /// Embedding coefficient file.
        #[arg(short, long, default_value = "torus.toml")]
        out: PathBuf,
        /// JSON convergence log.
        #[arg(long, default_value = "solve.json")]
        log: PathBuf,
    },
    /// Reduce the variational equation along a solved torus and print its exponents.
    Floquet {
        embedding: PathBuf,
        system: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        nu0: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        frozen: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the eps continuation of an experiment config.
    Continue {
        config: PathBuf,
        #[arg(short, long, default_value = "continuation.csv")]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Full pipeline: generate, check, hypotheses, continuation, validation, fits.
    Run {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Free,
    Enforced,
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> AnyResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn nu0_or_zeros(nu0: Vec<f64>, s: usize) -> AnyResult<Vec<f64>> {
    match nu0.len() {
        0 => Ok(vec![0.0; s]),
        l if l == s => Ok(nu0),
        l => Err(format!("--nu0 has {l} entries, the system has s = {s}").into()),
    }
}

/// Template of `Lambda(0, nu0)` with the given frozen set.
fn template_at(def: &SystemDefinition, nu0: &[f64], frozen: Vec<usize>) -> AnyResult<SpectrumTemplate> {
    let d = def.system.dims();
    let lam = def.system.lambda_at(&vec![0.0; d.m], nu0);
    let t = anticommuting_spectrum_classify(&lam, &def.involution.k)?;
    Ok(SpectrumTemplate::new(t.d1, t.d2, t.d3, t.alpha, t.beta, frozen)?)
}

fn check(system: &Path, samples: usize, seed: u64, report: Option<PathBuf>) -> AnyResult<bool> {
    #[derive(Serialize)]
    struct Report<T, U, V, W> {
        involution: T,
        reversibility: U,
        order: V,
        context: W,
        passed: bool,
    }
    let def = SystemDefinition::load(system)?;
    let (sys, inv) = (&def.system, &def.involution);
    let invr = involution_validate(inv);
    let rev = reversibility_residual(sys, inv, &SamplePlan::Random { count: samples, seed })?;
    let order = order_condition_check(sys, inv);
    let (p, q) = sys.dims().fix_dims();
    let ctx = context_classify(p, q, sys.dims().torus_dim())?;

    println!("{:<28} {:>12}  result", "check", "value");
    match &invr {
        Ok(r) => println!("{:<28} {:>12.3e}  {}", "involution K^2 = I", r.defect, mark(r.passed)),
        Err(e) => println!("{:<28} {:>12}  FAIL ({e})", "involution", "-"),
    }
    for e in &rev.identities {
        println!("{:<28} {:>12.3e}  {}", e.name, e.defect, mark(e.passed));
    }
    for e in &order.entries {
        println!("{:<28} {:>12.3}  {}", format!("order {} (>= {})", e.name, e.required), e.exponent, mark(e.passed));
    }
    println!("{:<28} {:>12}  {:?}", "context", format!("{:?}", ctx.characteristic), ctx.context);

    let passed = invr.as_ref().is_ok_and(|r| r.passed) && rev.passed && order.passed;
    if let Some(path) = report {
        let involution = invr.as_ref().map_err(|e| e.to_string()).map(|r| r.clone());
        write_json(&path, &Report { involution, reversibility: rev, order, context: ctx, passed })?;
    }
    Ok(passed)
}

#[derive(Deserialize)]
struct FrequencyInput {
    omega: Vec<f64>,
    #[serde(rename = "Omega", default)]
    forcing: Vec<f64>,
    #[serde(default)]
    beta0: Vec<f64>,
    tau: Option<f64>,
    gamma: Option<f64>,
    order_bound: Option<u32>,
}

fn frequency_data(file: &Path, tau: Option<f64>, gamma: Option<f64>, order_bound: Option<u32>) -> AnyResult<FrequencyData> {
    let text = std::fs::read_to_string(file)?;
    let mut fd = match ExperimentConfig::parse(&text) {
        Ok(cfg) => cfg.frequency_data()?,
        Err(_) => {
            let f: FrequencyInput = toml::from_str(&text)?;
            let dim = (f.omega.len() + f.forcing.len()) as f64;
            FrequencyData::new(
                f.omega,
                f.forcing,
                f.beta0,
                f.tau.unwrap_or(dim),
                f.gamma.unwrap_or(f64::NAN),
                f.order_bound.unwrap_or(DEFAULT_ORDER_BOUND),
            )
        }
    };
    let keep_gamma = fd.gamma.is_finite() && tau.is_none() && order_bound.is_none();
    if let Some(t) = tau {
        fd.tau = t;
    }
    if let Some(b) = order_bound {
        fd.order_bound = b;
    }
    fd.gamma = match gamma {
        Some(g) => g,
        None if keep_gamma => fd.gamma,
        None => best_gamma_estimate(&fd)?,
    };
    Ok(fd)
}

fn diophantine(file: &Path, tau: Option<f64>, gamma: Option<f64>, order_bound: Option<u32>, near: f64, report: Option<PathBuf>) -> AnyResult<bool> {
    let fd = frequency_data(file, tau, gamma, order_bound)?;
    let rep = diophantine_verify(&fd)?;
    let scan = resonance_scan(&fd, near * fd.gamma)?;
    println!("tau {}  gamma {:.6e}  order bound {}  window {}", fd.tau, fd.gamma, fd.order_bound, rep.window_size);
    match &rep.minimizer {
        Some(r) => println!(
            "minimizer j = {:?} J = {:?} q = {:?}  divisor {:.6e}  margin {:.6e}",
            r.j, r.big_j, r.q, r.divisor, r.margin
        ),
        None => println!("empty window"),
    }
    println!("{} tuples below {near} gamma; {}", scan.len(), mark(rep.passed));
    if let Some(path) = report {
        write_json(&path, &serde_json::json!({ "frequencies": fd, "report": rep, "near_resonances": scan }))?;
    }
    Ok(rep.passed)
}

fn generate(config: &Path, out: &Path) -> AnyResult<bool> {
    let cfg = ExperimentConfig::load(config)?;
    let def = SystemDefinition {
        system: generate_example_system(&cfg)?,
        involution: cfg.involution(),
    };
    std::fs::write(out, def.to_toml()?)?;
    println!("wrote {}", out.display());
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    system: &Path,
    eps: f64,
    nu0: Vec<f64>,
    mode: Mode,
    tol: Option<f64>,
    modes: Option<usize>,
    frozen: Vec<usize>,
    out: &Path,
    log_path: &Path,
) -> AnyResult<bool> {
    let def = SystemDefinition::load(system)?;
    let d = *def.system.dims();
    let nu0 = nu0_or_zeros(nu0, d.s)?;
    let template = template_at(&def, &nu0, frozen.clone())?;
    let omega = def.system.freq_at(&vec![0.0; d.m], &nu0);
    let fd = FrequencyData::new(omega, def.system.forcing_freq().to_vec(), template.beta.clone(), d.torus_dim() as f64, 0.0, DEFAULT_ORDER_BOUND);
    let mut opts = SolverOptions {
        frozen,
        mode: match mode {
            Mode::Free => SymmetryMode::Free,
            Mode::Enforced => SymmetryMode::Enforced,
        },
        ..SolverOptions::default()
    };
    if let Some(t) = tol {
        opts.tol = t;
    }
    if let Some(m) = modes {
        opts.modes = m;
    }
    let (t, log) = newton_solve(&def.system, &def.involution, &fd, &nu0, eps, &opts)?;
    let diag = theta_diagnostic(&t);
    let fixed = fixed_point_check(&t, &def.involution);
    std::fs::write(out, EmbeddingFile::from_embedding(&t).to_toml()?)?;
    for r in &log.iterations {
        println!("outer {} iteration {:>2}  residual {:.3e}  |Theta| {:.3e}", r.outer, r.iteration, r.residual, r.theta_norm);
    }
    println!("residual {:.3e}  fine grid {:.3e}  |Theta| {:.3e}  |B| <= {:.3e}", log.residual, log.fine_residual, diag.theta_norm, diag.b_norm);
    let fixed_ok = match &fixed {
        Ok(r) => {
            println!("fixed points {}/{}  max deviation {:.3e}  {}", r.found, r.expected, r.max_deviation, mark(r.passed));
            r.passed
        }
        Err(e) => {
            println!("fixed points: {e}");
            false
        }
    };
    write_json(
        log_path,
        &serde_json::json!({
            "convergence": log,
            "theta": t.theta,
            "nu": t.nu,
            "theta_diagnostic": diag,
            "fixed_points": fixed.as_ref().map_err(|e| e.to_string()),
        }),
    )?;
    println!("wrote {} and {}", out.display(), log_path.display());
    Ok(log.converged && fixed_ok)
}

fn floquet(embedding: &Path, system: &Path, nu0: Vec<f64>, frozen: Vec<usize>, report: Option<PathBuf>) -> AnyResult<bool> {
    let def = SystemDefinition::load(system)?;
    let t = EmbeddingFile::load(embedding)?;
    let nu0 = nu0_or_zeros(nu0, def.system.dims().s)?;
    let template = template_at(&def, &nu0, frozen)?;
    let fl = reduce_variational(&t, &def.system)?;
    let ver = exponent_verify(&fl, &template)?;
    println!("{:<14} {:>30} {:>30} {:>11}", "class", "computed", "template", "deviation");
    println!("{:<14} {:>30} {:>30} {:>11}", "zero", format!("x{} (max {:.1e})", ver.zero_count, ver.zero_max), "-", "-");
    for e in &ver.entries {
        let c = |z: &revtori::floquet::C64Pair| format!("{:+.10} {:+.10}i", z.re, z.im);
        println!("{:<14} {:>30} {:>30} {:>11.3e}", format!("{:?}", e.class), c(&e.computed), c(&e.template), e.deviation);
    }
    println!(
        "reduction defect {:.3e}  beta deviation {:.3e}  frozen deviation {:.3e}  {}",
        fl.defect,
        ver.beta_deviation_max,
        ver.frozen_deviation_max,
        mark(ver.passed)
    );
    if let Some(path) = report {
        let exps: Vec<(f64, f64)> = fl.exponents.iter().map(|z| (z.re, z.im)).collect();
        write_json(&path, &serde_json::json!({ "exponents": exps, "defect": fl.defect, "verification": ver }))?;
    }
    Ok(ver.passed)
}

fn continuation(config: &Path, out: &Path, report: Option<PathBuf>) -> AnyResult<bool> {
    let cfg = ExperimentConfig::load(config)?;
    let sys = generate_example_system(&cfg)?;
    let res = epsilon_continuation(&cfg, &sys, &cfg.involution())?;
    std::fs::write(out, continuation_csv(&res))?;
    for r in &res.records {
        println!("eps {:.3e}  residual {:.3e}  |Theta| {:.1e}  alpha {:?}  iterations {}", r.eps, r.residual, r.theta_norm, r.alpha, r.newton_iterations);
    }
    if let Some(b) = &res.breakdown {
        println!("breakdown at eps {:.3e}: {}", b.eps, b.error);
    }
    if let Some(path) = report {
        write_json(&path, &res)?;
    }
    println!("wrote {}", out.display());
    Ok(res.breakdown.is_none() && res.records.iter().all(|r| r.exponents_verified && r.fixed_points_passed))
}

fn run(config: &Path, out: &Path) -> AnyResult<bool> {
    let sum = run_experiment(config, out)?;
    for s in &sum.stages {
        println!("{:<14} {}  {}", s.stage, mark(s.passed), s.detail);
    }
    println!("{:.1}s, artifacts in {}", sum.elapsed_seconds, out.display());
    Ok(sum.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { system, samples, seed, report } => check(&system, samples, seed, report),
        Command::Diophantine { file, tau, gamma, order_bound, near, report } => diophantine(&file, tau, gamma, order_bound, near, report),
        Command::Generate { config, out } => generate(&config, &out),
        Command::Solve { system, eps, nu0, mode, tol, modes, frozen, out, log } => solve(&system, eps, nu0, mode, tol, modes, frozen, &out, &log),
        Command::Floquet { embedding, system, nu0, frozen, report } => floquet(&embedding, &system, nu0, frozen, report),
        Command::Continue { config, out, report } => continuation(&config, &out, report),
        Command::Run { config, out } => run(&config, &out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
