//! Invariant tori of the modified system with forcing row `Omega + Theta`,
//! parameterized as
//!
//! ```text
//!   x = phi + A(phi, Phi),  X = Phi + B(phi, Phi),  y = C(phi, Phi),  z = D(phi, Phi)
//! ```
//!
//! with `A`, `B`, `C` odd and `D(-theta) = K D(theta)` on symmetric tori.

mod file;
mod solver;

pub use file::{CoefficientTerm, EmbeddingFile};
pub use solver::{
    newton_solve, submersion_check, ConvergenceLog, IterationRecord, OuterRecord, SolverOptions, SubmersionReport,
    SymmetryMode, TorusProblem,
};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{FourierField, Grid, ModeSet, Parity};
use crate::model::{angle_diff, apply_involution, Dims, InvolutionSpec, PhasePoint, SystemFamily};

/// Parity defects above this make a torus asymmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct TorusEmbedding {
    pub dims: Dims,
    pub a: FourierField,
    pub b: FourierField,
    pub c: FourierField,
    pub d: FourierField,
    pub theta: Vec<f64>,
    pub nu: Vec<f64>,
    pub eps: f64,
    /// `(omega, Omega)`
    pub freq: Vec<f64>,
}

impl TorusEmbedding {
    /// The torus `{y = 0, z = 0}`.
    pub fn zero(dims: Dims, k: &DMatrix<f64>, modes: usize, freq: Vec<f64>, nu: Vec<f64>, eps: f64) -> Self {
        let ms = ModeSet::new(dims.torus_dim(), modes);
        Self {
            dims,
            a: FourierField::zeros(ms, dims.n, Parity::Odd),
            b: FourierField::zeros(ms, dims.forcing, Parity::Odd),
            c: FourierField::zeros(ms, dims.m, Parity::Odd),
            d: FourierField::zeros(ms, 2 * dims.p, Parity::KTwisted(k.clone())),
            theta: vec![0.0; dims.forcing],
            nu,
            eps,
            freq,
        }
    }

    pub fn modes(&self) -> ModeSet {
        self.a.modes()
    }

    /// Fields in phase-space order `(x, y, z, X)`.
    pub fn fields(&self) -> [&FourierField; 4] {
        [&self.a, &self.c, &self.d, &self.b]
    }

    pub fn fields_mut(&mut self) -> [&mut FourierField; 4] {
        [&mut self.a, &mut self.c, &mut self.d, &mut self.b]
    }

    /// Field and local component of phase-space component `i`.
    pub(crate) fn locate(&self, i: usize) -> (usize, usize) {
        let d = &self.dims;
        let bounds = [d.n, d.n + d.m, d.n + d.m + 2 * d.p];
        match bounds.iter().position(|&b| i < b) {
            Some(0) => (0, i),
            Some(1) => (1, i - d.n),
            Some(2) => (2, i - d.n - d.m),
            _ => (3, i - bounds[2]),
        }
    }

    /// Re-truncates every field to `modes` per angle.
    pub fn with_modes(&self, modes: usize) -> Self {
        let mut t = self.clone();
        for (dst, src) in t.fields_mut().into_iter().zip(self.fields()) {
            *dst = src.retruncate(modes);
        }
        t
    }

    fn check(&self, sys: &SystemFamily) -> Result<()> {
        let d = sys.dims();
        if *d != self.dims || self.freq.len() != d.torus_dim() || self.nu.len() != d.s || self.theta.len() != d.forcing {
            return Err(Error::DimensionMismatch("embedding does not match the system dimensions".into()));
        }
        Ok(())
    }
}

/// The phase point on the torus at angle `theta`; angles are not reduced.
pub fn evaluate_embedding(t: &TorusEmbedding, theta: &[f64]) -> PhasePoint {
    let d = &t.dims;
    let a = t.a.eval(theta);
    let b = t.b.eval(theta);
    PhasePoint {
        x: (0..d.n).map(|i| theta[i] + a[i]).collect(),
        y: t.c.eval(theta),
        z: t.d.eval(theta),
        forcing: (0..d.forcing).map(|i| theta[d.n + i] + b[i]).collect(),
    }
}

/// Embedding values on a grid, phase-space order.
pub fn embedding_grid(t: &TorusEmbedding, size: usize) -> Grid {
    let d = &t.dims;
    let pd = d.phase_dim();
    let mut out = Grid::zeros(d.torus_dim(), size, pd);
    let grids: Vec<Grid> = t.fields().iter().map(|f| f.to_grid(size)).collect();
    for pt in 0..out.points() {
        let th = out.angles(pt);
        let slot = out.value_mut(pt);
        let mut r = 0;
        for (fi, g) in grids.iter().enumerate() {
            for (c, v) in g.value(pt).iter().enumerate() {
                slot[r] = *v
                    + match fi {
                        0 => th[c],
                        3 => th[d.n + c],
                        _ => 0.0,
                    };
                r += 1;
            }
        }
    }
    out
}

/// Embedding values and the tangent matrix `DK` (row-major `phase x angles`) on a grid.
pub fn embedding_jet_grid(t: &TorusEmbedding, size: usize) -> (Grid, Grid) {
    let d = &t.dims;
    let (pd, na) = (d.phase_dim(), d.torus_dim());
    let values = embedding_grid(t, size);
    let mut dk = Grid::zeros(na, size, pd * na);
    for a in 0..na {
        let mut r0 = 0;
        for (fi, f) in t.fields().iter().enumerate() {
            let g = f.partial(a).to_grid(size);
            for pt in 0..dk.points() {
                let slot = dk.value_mut(pt);
                for c in 0..f.dim() {
                    let id = match fi {
                        0 if c == a => 1.0,
                        3 if d.n + c == a => 1.0,
                        _ => 0.0,
                    };
                    slot[(r0 + c) * na + a] = g.value(pt)[c] + id;
                }
            }
            r0 += f.dim();
        }
    }
    (values, dk)
}

/// Embedding value and tangent matrix `DK` (row-major `phase x angles`) at one angle.
pub fn embedding_jet(t: &TorusEmbedding, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = &t.dims;
    let (pd, na) = (d.phase_dim(), d.torus_dim());
    let value = evaluate_embedding(t, theta).to_flat();
    let mut dk = vec![0.0; pd * na];
    for a in 0..na {
        let mut r0 = 0;
        for (fi, f) in t.fields().iter().enumerate() {
            let g = f.partial(a).eval(theta);
            for c in 0..f.dim() {
                let id = match fi {
                    0 if c == a => 1.0,
                    3 if d.n + c == a => 1.0,
                    _ => 0.0,
                };
                dk[(r0 + c) * na + a] = g[c] + id;
            }
            r0 += f.dim();
        }
    }
    (value, dk)
}

/// Pointwise invariance defect `E = d_w K - V(K; nu, eps, Theta)` on a grid.
pub fn residual_grid(t: &TorusEmbedding, sys: &SystemFamily, size: usize) -> Result<Grid> {
    t.check(sys)?;
    let d = &t.dims;
    let pd = d.phase_dim();
    let values = embedding_grid(t, size);
    let derivs: Vec<Grid> = t.fields().iter().map(|f| f.derivative(&t.freq).to_grid(size)).collect();
    let mut out = Grid::zeros(d.torus_dim(), size, pd);
    for pt in 0..out.points() {
        let v = sys.vector_field(values.value(pt), &t.nu, t.eps, &t.theta);
        let slot = out.value_mut(pt);
        let mut r = 0;
        for (fi, g) in derivs.iter().enumerate() {
            for (c, dv) in g.value(pt).iter().enumerate() {
                let base = match fi {
                    0 => t.freq[c],
                    3 => t.freq[d.n + c],
                    _ => 0.0,
                };
                slot[r] = base + dv - v[r];
                r += 1;
            }
        }
    }
    Ok(out)
}

/// Solver grid size for a truncation of `modes` per angle.
pub fn solver_grid(modes: usize) -> usize {
    2 * (2 * modes + 1)
}

/// Fourier coefficients of the invariance defect, one component per phase-space row.
pub fn invariance_residual(t: &TorusEmbedding, sys: &SystemFamily) -> Result<FourierField> {
    let g = residual_grid(t, sys, solver_grid(t.modes().modes))?;
    Ok(FourierField::from_grid(&g, t.modes(), Parity::None))
}

/// Projects every field onto its parity class. Returns the projected
/// embedding and the largest coefficient change.
pub fn symmetry_project(t: &TorusEmbedding) -> (TorusEmbedding, f64) {
    let mut out = t.clone();
    let mut dist: f64 = 0.0;
    for f in out.fields_mut() {
        let (g, d) = f.project();
        *f = g;
        dist = dist.max(d);
    }
    (out, dist)
}

/// Largest parity defect of the four fields on a grid.
pub fn parity_defect(t: &TorusEmbedding, size: usize) -> f64 {
    t.fields().iter().map(|f| f.parity_defect(size)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaDiagnostic {
    /// Grid mean of `d_w B - Theta`.
    pub theta_residual: Vec<f64>,
    /// Grid mean of `d_w B`, zero for any trigonometric series.
    pub derivative_mean: Vec<f64>,
    /// Sum of the moduli of the coefficients of `B`, a bound on `sup |B|`.
    pub b_norm: f64,
    pub theta_norm: f64,
}

pub fn theta_diagnostic(t: &TorusEmbedding) -> ThetaDiagnostic {
    let size = solver_grid(t.modes().modes);
    let g = t.b.derivative(&t.freq).to_grid(size);
    let pts = g.points() as f64;
    let derivative_mean: Vec<f64> = (0..g.dim)
        .map(|c| (0..g.points()).map(|p| g.value(p)[c]).sum::<f64>() / pts)
        .collect();
    ThetaDiagnostic {
        theta_residual: derivative_mean.iter().zip(&t.theta).map(|(m, th)| m - th).collect(),
        derivative_mean,
        b_norm: t.b.l1_norm(),
        theta_norm: t.theta.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPoint {
    pub angles: Vec<f64>,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub expected: usize,
    pub found: usize,
    pub points: Vec<FixedPoint>,
    pub max_deviation: f64,
    /// Grid points off `{0, pi}^d` that are also fixed.
    pub spurious: usize,
    pub passed: bool,
}

fn involution_distance(inv: &InvolutionSpec, p: &PhasePoint) -> Result<f64> {
    let g = apply_involution(inv, p)?;
    let ang = p.x.iter().zip(&g.x).chain(p.forcing.iter().zip(&g.forcing));
    let mut d: f64 = ang.map(|(a, b)| angle_diff(*a, *b).abs()).fold(0.0, f64::max);
    for (a, b) in p.y.iter().zip(&g.y).chain(p.z.iter().zip(&g.z)) {
        d = d.max((a - b).abs());
    }
    Ok(d)
}

/// Checks that exactly the `2^(n+N)` points with angles in `{0, pi}` are
/// fixed by `G` on the torus.
pub fn fixed_point_check(t: &TorusEmbedding, inv: &InvolutionSpec) -> Result<FixedPointReport> {
    let size = solver_grid(t.modes().modes);
    let defect = parity_defect(t, size);
    if defect > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { defect });
    }
    let na = t.dims.torus_dim();
    let expected = 1usize << na;
    let mut points = Vec::with_capacity(expected);
    for mask in 0..expected {
        let angles: Vec<f64> = (0..na)
            .map(|a| if mask >> (na - 1 - a) & 1 == 1 { std::f64::consts::PI } else { 0.0 })
            .collect();
        let deviation = involution_distance(inv, &evaluate_embedding(t, &angles))?;
        points.push(FixedPoint { angles, deviation });
    }
    let found = points.iter().filter(|p| p.deviation <= SYMMETRY_TOL).count();
    let max_deviation = points.iter().fold(0.0, |m: f64, p| m.max(p.deviation));
    // even grid size so that 0 and pi are grid points
    let half = size / 2;
    let grid = Grid::zeros(na, size, 0);
    let mut spurious = 0;
    for pt in 0..grid.points() {
        let th = grid.angles(pt);
        let mut idx = pt;
        let mut special = true;
        for _ in 0..na {
            special &= idx % size % half == 0;
            idx /= size;
        }
        if special {
            continue;
        }
        if involution_distance(inv, &evaluate_embedding(t, &th))? <= SYMMETRY_TOL {
            spurious += 1;
        }
    }
    Ok(FixedPointReport {
        expected,
        found,
        points,
        max_deviation,
        spurious,
        passed: found == expected && spurious == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::C64;

    fn dims() -> Dims {
        Dims::new(1, 1, 1, 1, 2)
    }

    fn kmat() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
    }

    fn zero() -> TorusEmbedding {
        TorusEmbedding::zero(dims(), &kmat(), 3, vec![1.0, 1.618], vec![0.0; 2], 0.0)
    }

    #[test]
    fn zero_embedding_is_identity_torus() {
        let t = zero();
        let p = evaluate_embedding(&t, &[0.0, 0.0]);
        assert_eq!(p.to_flat(), vec![0.0; 5]);
        let p = evaluate_embedding(&t, &[0.4, 2.0]);
        assert_eq!(p.to_flat(), vec![0.4, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn projection_kills_constant_b() {
        let mut t = zero();
        t.b.set_real_mode(&[0, 0], 0, C64::new(0.3, 0.0));
        let (p, d) = symmetry_project(&t);
        assert_eq!(p.b.max_coeff(), 0.0);
        assert_eq!(d, 0.3);
        let (q, d2) = symmetry_project(&p);
        assert_eq!(d2, 0.0);
        assert_eq!(q, p);
    }

    #[test]
    fn theta_diagnostic_on_single_sine() {
        let mut t = zero();
        // sin(phi) = (e^{i phi} - e^{-i phi}) / 2i
        t.b.set_real_mode(&[1, 0], 0, C64::new(0.0, -0.5));
        t.theta = vec![0.25];
        let diag = theta_diagnostic(&t);
        assert!(diag.derivative_mean[0].abs() < 1e-15);
        assert!((diag.theta_residual[0] + 0.25).abs() < 1e-15);
        assert!((diag.b_norm - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_points_of_zero_torus() {
        let inv = InvolutionSpec::new(kmat(), dims()).unwrap();
        let rep = fixed_point_check(&zero(), &inv).unwrap();
        assert_eq!((rep.found, rep.spurious), (4, 0));
        assert!(rep.passed);
        let d1 = Dims::new(1, 1, 1, 0, 1);
        let inv1 = InvolutionSpec::new(kmat(), d1).unwrap();
        let t1 = TorusEmbedding::zero(d1, &kmat(), 3, vec![1.0], vec![0.0], 0.0);
        assert_eq!(fixed_point_check(&t1, &inv1).unwrap().found, 2);
    }

    #[test]
    fn asymmetric_torus_is_rejected() {
        let inv = InvolutionSpec::new(kmat(), dims()).unwrap();
        let mut t = zero();
        t.c.set_real_mode(&[1, 0], 0, C64::new(0.1, 0.0));
        assert!(matches!(fixed_point_check(&t, &inv), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn jet_grid_matches_finite_differences() {
        let mut t = zero();
        t.a.set_real_mode(&[1, -1], 0, C64::new(0.0, 0.02));
        t.d.set_real_mode(&[0, 1], 1, C64::new(0.0, 0.03));
        let (vals, dk) = embedding_jet_grid(&t, 6);
        let pt = 7;
        let th = vals.angles(pt);
        let h = 1e-6;
        for a in 0..2 {
            let mut tp = th.clone();
            let mut tm = th.clone();
            tp[a] += h;
            tm[a] -= h;
            let fp = evaluate_embedding(&t, &tp).to_flat();
            let fm = evaluate_embedding(&t, &tm).to_flat();
            for r in 0..5 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - dk.value(pt)[r * 2 + a]).abs() < 1e-8);
            }
        }
    }
}
