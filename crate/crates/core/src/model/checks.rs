//! Machine checks of the structural identities a system must satisfy.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Dims, InvolutionSpec, PhasePoint, SystemFamily};
use crate::error::{Error, Result};
use crate::linalg::numerical_rank;
use crate::trig::TrigPoly;

pub const INVOLUTION_TOL: f64 = 1e-12;
pub const IDENTITY_TOL: f64 = 1e-10;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_SEED: u64 = 0x5eed_2011;

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub plus: usize,
    pub minus: usize,
    /// max |K^2 - I|
    pub defect: f64,
}

/// Checks that `K^2 = I` and that `K` has `p` eigenvalues `+1` and `p`
/// eigenvalues `-1`.
pub fn involution_validate(inv: &InvolutionSpec) -> Result<ValidationReport> {
    let k = &inv.k;
    let n = k.nrows();
    if n != k.ncols() || n % 2 != 0 {
        return Err(Error::BadDims(format!("K must be square of even size, got {}x{}", n, k.ncols())));
    }
    let p = n / 2;
    let sq = k * k - DMatrix::<f64>::identity(n, n);
    let defect = sq.amax();
    if defect > INVOLUTION_TOL {
        return Err(Error::NonInvolutive { defect });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    // dim ker(K - I) and dim ker(K + I)
    let plus = n - numerical_rank(&(k - &eye), 1e-8);
    let minus = n - numerical_rank(&(k + &eye), 1e-8);
    if plus != p || minus != p {
        return Err(Error::WrongSignature { plus, minus, p });
    }
    Ok(ValidationReport {
        passed: true,
        plus,
        minus,
        defect,
    })
}

/// One evaluation point for the identity checks.
#[derive(Clone, Debug)]
pub struct Sample {
    pub point: PhasePoint,
    pub nu: Vec<f64>,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub enum SamplePlan {
    /// Uniform samples in the declared domains.
    Random { count: usize, seed: u64 },
    Explicit(Vec<Sample>),
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan::Random {
            count: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

impl SamplePlan {
    pub fn samples(&self, sys: &SystemFamily, inv: &InvolutionSpec) -> Result<Vec<Sample>> {
        match self {
            SamplePlan::Explicit(list) => {
                let dom = sys.domain();
                for s in list {
                    if !dom.contains_y(&s.point.y) {
                        return Err(Error::DomainViolation(format!("y = {:?} outside |y_i| <= {}", s.point.y, dom.y_radius)));
                    }
                    if !dom.contains_z(&s.point.z, &inv.k) {
                        return Err(Error::DomainViolation(format!("z = {:?} outside the K-symmetric ball of radius {}", s.point.z, dom.z_radius)));
                    }
                }
                Ok(list.clone())
            }
            SamplePlan::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..*count).map(|_| random_sample(&mut rng, sys, inv)).collect())
            }
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            SamplePlan::Random { seed, .. } => Some(*seed),
            SamplePlan::Explicit(_) => None,
        }
    }
}

fn random_sample(rng: &mut ChaCha8Rng, sys: &SystemFamily, inv: &InvolutionSpec) -> Sample {
    let d = sys.dims();
    let dom = sys.domain();
    let x = (0..d.n).map(|_| rng.random_range(0.0..TAU)).collect();
    let forcing = (0..d.forcing).map(|_| rng.random_range(0.0..TAU)).collect();
    let y = (0..d.m).map(|_| rng.random_range(-dom.y_radius..=dom.y_radius)).collect();
    let r = dom.z_radius;
    let z = loop {
        let cand: Vec<f64> = (0..2 * d.p).map(|_| rng.random_range(-r..=r)).collect();
        if dom.contains_z(&cand, &inv.k) {
            break cand;
        }
    };
    let nu = dom
        .nu_center
        .iter()
        .map(|c| c + rng.random_range(-dom.nu_radius..=dom.nu_radius))
        .collect();
    let eps = rng.random_range(0.0..=dom.eps_max);
    Sample {
        point: PhasePoint { x, y, z, forcing },
        nu,
        eps,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityDefect {
    pub name: &'static str,
    pub defect: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub seed: Option<u64>,
    pub samples: usize,
    pub tolerance: f64,
    pub identities: Vec<IdentityDefect>,
    pub passed: bool,
}

impl ResidualReport {
    pub fn defect(&self, name: &str) -> Option<f64> {
        self.identities.iter().find(|e| e.name == name).map(|e| e.defect)
    }
}

struct Args {
    angles: Vec<f64>,
    vars: Vec<f64>,
}

fn args_at(d: &Dims, x: &[f64], y: &[f64], z: &[f64], forcing: &[f64], nu: &[f64], eps: f64) -> Args {
    let mut angles = x.to_vec();
    angles.extend_from_slice(forcing);
    let mut vars = y.to_vec();
    vars.extend_from_slice(z);
    vars.extend_from_slice(nu);
    vars.push(eps);
    debug_assert_eq!(vars.len(), d.n_vars());
    Args { angles, vars }
}

/// Evaluates every reversibility identity at the samples of `plan` and
/// reports the largest defect per identity.
///
/// Besides the nine identities on `H, Xi, Lambda, f#, g#, h#, f, g, h`, the
/// forcing row must read `X' = Omega` exactly, so any drift term is reported
/// as a defect of its own.
pub fn reversibility_residual(sys: &SystemFamily, inv: &InvolutionSpec, plan: &SamplePlan) -> Result<ResidualReport> {
    let d = *sys.dims();
    if inv.dims != d {
        return Err(Error::DimensionMismatch("system and involution dimensions differ".into()));
    }
    let samples = plan.samples(sys, inv)?;
    let c = sys.components();
    let k = &inv.k;
    let p2 = 2 * d.p;
    let mut worst = [0.0f64; 10];

    for s in &samples {
        let pt = &s.point;
        let zk = (k * DVector::from_column_slice(&pt.z)).as_slice().to_vec();
        let neg = |v: &[f64]| v.iter().map(|a| -a).collect::<Vec<_>>();
        let a = args_at(&d, &pt.x, &pt.y, &pt.z, &pt.forcing, &s.nu, s.eps);
        let ga = args_at(&d, &neg(&pt.x), &neg(&pt.y), &zk, &neg(&pt.forcing), &s.nu, s.eps);

        let even = |poly: &TrigPoly| max_diff(&poly.eval(&ga.angles, &ga.vars), &poly.eval(&a.angles, &a.vars));
        worst[0] = worst[0].max(even(&c.freq));
        worst[1] = worst[1].max(even(&c.xi));

        let lam = DMatrix::from_row_slice(p2, p2, &c.lambda.eval(&a.angles, &a.vars));
        let lam_neg = DMatrix::from_row_slice(p2, p2, &c.lambda.eval(&ga.angles, &ga.vars));
        worst[2] = worst[2].max((lam_neg * k + k * lam).amax());

        worst[3] = worst[3].max(even(&c.f_sharp));
        worst[4] = worst[4].max(even(&c.g_sharp));
        worst[5] = worst[5].max(twisted_defect(&c.h_sharp, k, &a, &ga));
        worst[6] = worst[6].max(even(&c.f));
        worst[7] = worst[7].max(even(&c.g));
        worst[8] = worst[8].max(twisted_defect(&c.h, k, &a, &ga));
        let drift = c.drift.eval(&a.angles, &a.vars);
        worst[9] = worst[9].max(drift.iter().fold(0.0, |m, v| m.max(v.abs())));
    }

    let names = ["H", "Xi", "Lambda", "f_sharp", "g_sharp", "h_sharp", "f", "g", "h", "forcing_row"];
    let identities: Vec<_> = names
        .iter()
        .zip(worst)
        .map(|(name, defect)| IdentityDefect {
            name,
            defect,
            passed: defect <= IDENTITY_TOL,
        })
        .collect();
    let passed = identities.iter().all(|e| e.passed);
    Ok(ResidualReport {
        seed: plan.seed(),
        samples: samples.len(),
        tolerance: IDENTITY_TOL,
        identities,
        passed,
    })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

// h(Ga) + K h(a)
fn twisted_defect(poly: &TrigPoly, k: &DMatrix<f64>, a: &Args, ga: &Args) -> f64 {
    let ha = DVector::from_vec(poly.eval(&a.angles, &a.vars));
    let hga = DVector::from_vec(poly.eval(&ga.angles, &ga.vars));
    (hga + k * ha).amax()
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderEntry {
    pub name: &'static str,
    /// Smallest fitted log-log slope over the probe directions.
    pub exponent: f64,
    pub required: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderReport {
    pub scales: Vec<f64>,
    pub entries: Vec<OrderEntry>,
    pub passed: bool,
}

const ORDER_SCALES: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
/// Probe amplitude relative to the z radius.
const ORDER_BASE: f64 = 1e-3;

/// Fits the decay exponent of `|f#|, |g#|, |h#|` as `z -> 0` along a few
/// fixed directions. Requires at least 0.9 for `f#` and 1.9 for the others.
pub fn order_condition_check(sys: &SystemFamily, inv: &InvolutionSpec) -> OrderReport {
    let d = *sys.dims();
    let dom = sys.domain();
    let c = sys.components();
    let probes = probe_points(&d, dom.y_radius, &dom.nu_center);
    let checks: [(&'static str, &TrigPoly, f64); 3] = [
        ("f_sharp", &c.f_sharp, 0.9),
        ("g_sharp", &c.g_sharp, 1.9),
        ("h_sharp", &c.h_sharp, 1.9),
    ];
    let mut entries = Vec::new();
    for (name, poly, required) in checks {
        let mut exponent = f64::INFINITY;
        for (x, y, forcing, dir) in &probes {
            let dirv = DVector::from_column_slice(dir);
            let scale = dirv.norm().max((&inv.k * &dirv).norm());
            let z0: Vec<f64> = dir.iter().map(|v| ORDER_BASE * dom.z_radius * v / scale).collect();
            let norms: Vec<f64> = ORDER_SCALES
                .iter()
                .map(|t| {
                    let z: Vec<f64> = z0.iter().map(|v| v * t).collect();
                    let a = args_at(&d, x, y, &z, forcing, &dom.nu_center, 0.0);
                    let v = poly.eval(&a.angles, &a.vars);
                    v.iter().map(|e| e * e).sum::<f64>().sqrt()
                })
                .collect();
            exponent = exponent.min(loglog_slope(&ORDER_SCALES, &norms));
        }
        entries.push(OrderEntry {
            name,
            exponent,
            required,
            passed: exponent >= required,
        });
    }
    let passed = entries.iter().all(|e| e.passed);
    OrderReport {
        scales: ORDER_SCALES.to_vec(),
        entries,
        passed,
    }
}

type Probe = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn probe_points(d: &Dims, y_radius: f64, _nu: &[f64]) -> Vec<Probe> {
    let seq = |len: usize, seed: f64| -> Vec<f64> {
        (0..len).map(|i| ((seed + 0.618_033_988_7 * (i as f64 + 1.0)) % 1.0) * 2.0 - 1.0).collect()
    };
    [0.137, 0.481, 0.829]
        .iter()
        .map(|&s| {
            let x = seq(d.n, s).iter().map(|v| 2.5 * v).collect();
            let forcing = seq(d.forcing, s + 0.3).iter().map(|v| 2.5 * v).collect();
            let y = seq(d.m, s + 0.7).iter().map(|v| 0.3 * y_radius * v).collect();
            let dir = seq(2 * d.p, s + 0.11);
            (x, y, forcing, dir)
        })
        .collect()
}

/// Least-squares slope of `log norm` against `log t`. Identically vanishing
/// data has infinite order.
fn loglog_slope(ts: &[f64], norms: &[f64]) -> f64 {
    if norms.iter().all(|&v| v == 0.0) {
        return f64::INFINITY;
    }
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(norms)
        .map(|(t, v)| (t.ln(), v.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Components, Domain};
    use crate::trig::{Monomial, Trig};

    fn dims() -> Dims {
        Dims::new(1, 1, 1, 1, 1)
    }

    // vars: [y, z0, z1, nu, eps]
    fn base() -> Components {
        let d = dims();
        let mut c = Components::zero(&d);
        c.freq.push(Monomial::plain(vec![0; 5], vec![1.0], 2)).unwrap();
        c.freq.push(Monomial::plain(vec![0, 0, 0, 1, 0], vec![1.0], 2)).unwrap();
        c.freq.push(Monomial::plain(vec![2, 0, 0, 0, 0], vec![1.0], 2)).unwrap();
        c.lambda.push(Monomial::plain(vec![0; 5], vec![0.0, 1.0, 1.0, 0.0], 2)).unwrap();
        c
    }

    fn build(c: Components) -> (SystemFamily, InvolutionSpec) {
        let d = dims();
        (SystemFamily::new(d, vec![1.3], Domain::unit(&d), c).unwrap(), InvolutionSpec::standard(d))
    }

    #[test]
    fn diagonal_involutions() {
        let d = dims();
        let inv = InvolutionSpec::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])), d).unwrap();
        let rep = involution_validate(&inv).unwrap();
        assert_eq!((rep.plus, rep.minus), (1, 1));

        let inv = InvolutionSpec::new(DMatrix::identity(2, 2), d).unwrap();
        match involution_validate(&inv) {
            Err(Error::WrongSignature { plus, minus, .. }) => assert_eq!((plus, minus), (2, 0)),
            other => panic!("unexpected {other:?}"),
        }

        let inv = InvolutionSpec::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, -1.0]), d).unwrap();
        assert!(involution_validate(&inv).is_ok());
        let inv = InvolutionSpec::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), d).unwrap();
        assert!(matches!(involution_validate(&inv), Err(Error::NonInvolutive { .. })));
    }

    #[test]
    fn even_frequency_map_has_zero_defect() {
        let (sys, inv) = build(base());
        let rep = reversibility_residual(&sys, &inv, &SamplePlan::default()).unwrap();
        assert_eq!(rep.defect("H"), Some(0.0));
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.samples, DEFAULT_SAMPLES);
        assert_eq!(rep.seed, Some(DEFAULT_SEED));
    }

    #[test]
    fn parity_mismatch_in_h_is_reported() {
        let mut c = base();
        // cos(x) e_+ with K e_+ = e_+: h(-x) = h(x) but -K h(x) = -h(x)
        c.h.push(Monomial::new(Trig::Cos, vec![1, 0], vec![0; 5], vec![1.0, 0.0])).unwrap();
        let (sys, inv) = build(c);
        let rep = reversibility_residual(&sys, &inv, &SamplePlan::default()).unwrap();
        assert!(rep.defect("h").unwrap() > 0.1);
        assert!(!rep.passed);
        assert!(rep.defect("f").unwrap() == 0.0);
    }

    #[test]
    fn drift_is_a_defect() {
        let d = dims();
        let (sys, inv) = build(base());
        let drift = TrigPoly::new(1, 2, d.n_vars(), vec![Monomial::plain(vec![0; 5], vec![1.0], 2)]).unwrap();
        let sys = sys.with_drift(drift).unwrap();
        let rep = reversibility_residual(&sys, &inv, &SamplePlan::default()).unwrap();
        assert!(!rep.passed);
        assert!((rep.defect("forcing_row").unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn explicit_samples_outside_domain_are_rejected() {
        let d = dims();
        let (sys, inv) = build(base());
        let mut pt = PhasePoint::zeros(&d);
        pt.y[0] = 5.0;
        let plan = SamplePlan::Explicit(vec![Sample {
            point: pt,
            nu: vec![0.0],
            eps: 0.0,
        }]);
        assert!(matches!(reversibility_residual(&sys, &inv, &plan), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn order_exponents() {
        let mut c = base();
        c.f_sharp.push(Monomial::new(Trig::Cos, vec![1, 0], vec![0, 1, 0, 0, 0], vec![1.0])).unwrap();
        c.g_sharp.push(Monomial::plain(vec![0, 2, 0, 0, 0], vec![1.0], 2)).unwrap();
        c.g_sharp.push(Monomial::plain(vec![0, 0, 2, 0, 0], vec![-1.0], 2)).unwrap();
        let (sys, inv) = build(c);
        let rep = order_condition_check(&sys, &inv);
        assert!((rep.entries[0].exponent - 1.0).abs() < 1e-9);
        assert!((rep.entries[1].exponent - 2.0).abs() < 1e-9);
        assert!(rep.entries[2].exponent.is_infinite());
        assert!(rep.passed);

        let mut c = base();
        c.g_sharp.push(Monomial::plain(vec![0, 1, 0, 0, 0], vec![1.0], 2)).unwrap();
        let (sys, inv) = build(c);
        let rep = order_condition_check(&sys, &inv);
        assert!((rep.entries[1].exponent - 1.0).abs() < 1e-9);
        assert!(!rep.passed);
    }
}
