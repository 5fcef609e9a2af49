use thiserror::Error;

/// Errors raised across the crate. Variants mirror the failure modes of the
/// individual checks and solvers so callers can match on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix K is not an involution: max |K^2 - I| = {defect:.3e}")]
    NonInvolutive { defect: f64 },

    #[error("K has eigenvalue multiplicities (+1: {plus}, -1: {minus}), expected ({p}, {p})")]
    WrongSignature { plus: usize, minus: usize, p: usize },

    #[error("sample point outside the declared domain: {0}")]
    DomainViolation(String),

    #[error("bad dimensions: {0}")]
    BadDims(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("tau = {tau} must exceed n + N - 1 = {bound}")]
    BadTau { tau: f64, bound: f64 },

    #[error("small divisor {divisor:.3e} at wave vector {wave:?} is below the floor {floor:.1e}")]
    SmallDivisorBreakdown { wave: Vec<i64>, divisor: f64, floor: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("parameter map is not submersive: rank {rank} < {required} (smallest singular value {sigma_min:.3e})")]
    RankDeficient { sigma_min: f64, rank: usize, required: usize },

    #[error("embedding violates its parity constraints by {defect:.3e}")]
    NotSymmetric { defect: f64 },

    #[error("matrix does not anti-commute with K: max |L K + K L| = {defect:.3e}")]
    NotAnticommuting { defect: f64 },

    #[error("spectrum is not simple: minimal eigenvalue gap {gap:.3e}")]
    DegenerateSpectrum { gap: f64 },

    #[error("reducibility breakdown: divisor {divisor:.3e} at wave vector {wave:?} is below the floor {floor:.1e}")]
    ReducibilityBreakdown { wave: Vec<i64>, divisor: f64, floor: f64 },

    #[error("exponent pattern mismatch: {0}")]
    PatternMismatch(String),

    #[error("spectrum template infeasible: d1 + d2 + 2 d3 = {got} but p = {p}")]
    TemplateInfeasible { got: usize, p: usize },

    #[error("insufficient data: need {needed} converged records, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("integration failed: {0}")]
    IntegrationFailure(String),

    #[error("hypothesis `{hypothesis}` violated: {detail}")]
    HypothesisViolation { hypothesis: &'static str, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
