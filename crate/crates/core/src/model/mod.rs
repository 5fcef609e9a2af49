//! Quasi-periodically forced reversible systems
//!
//! ```text
//!   x' = H(y,nu) + f#(x,y,z,nu) + eps f(x,y,z,X,nu,eps)
//!   y' = Xi(y,nu) + g#(x,y,z,nu) + eps g(x,y,z,X,nu,eps)
//!   z' = Lambda(y,nu) z + h#(x,y,z,nu) + eps h(x,y,z,X,nu,eps)
//!   X' = Omega (+ Theta) (+ eps drift)
//! ```
//!
//! on `T^n x Y x O_2p(0) x T^N`, together with the involution
//! `G: (x,y,z,X) -> (-x,-y,Kz,-X)`.
//!
//! Phase points are flattened as `[x (n), y (m), z (2p), X (N)]`. Every
//! component map is a [`TrigPoly`] whose angles are `[x, X]` and whose
//! polynomial variables are `[y, z, nu, eps]`.

pub mod checks;
mod file;

pub use checks::{
    involution_validate, order_condition_check, reversibility_residual, IdentityDefect,
    OrderReport, ResidualReport, Sample, SamplePlan, ValidationReport,
};
pub use file::{SystemDefinition, SystemFile};

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trig::TrigPoly;

/// Dimensions of the phase space and parameter space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// torus angles x
    pub n: usize,
    /// dimension of y
    pub m: usize,
    /// half the dimension of z
    pub p: usize,
    /// forcing angles X
    #[serde(rename = "N")]
    pub forcing: usize,
    /// external parameters nu
    pub s: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, p: usize, forcing: usize, s: usize) -> Self {
        Self {
            n,
            m,
            p,
            forcing,
            s,
        }
    }

    pub fn phase_dim(&self) -> usize {
        self.n + self.m + 2 * self.p + self.forcing
    }

    pub fn torus_dim(&self) -> usize {
        self.n + self.forcing
    }

    /// Dimension of the transverse `(y, z)` block.
    pub fn normal_dim(&self) -> usize {
        self.m + 2 * self.p
    }

    /// Number of polynomial variables `(y, z, nu, eps)`.
    pub fn n_vars(&self) -> usize {
        self.m + 2 * self.p + self.s + 1
    }

    pub fn y_range(&self) -> std::ops::Range<usize> {
        self.n..self.n + self.m
    }

    pub fn z_range(&self) -> std::ops::Range<usize> {
        self.n + self.m..self.n + self.m + 2 * self.p
    }

    pub fn forcing_range(&self) -> std::ops::Range<usize> {
        let start = self.n + self.m + 2 * self.p;
        start..start + self.forcing
    }

    /// `dim Fix G` and `codim Fix G` for the involution `G`.
    pub fn fix_dims(&self) -> (usize, usize) {
        (self.p, self.n + self.m + self.p + self.forcing)
    }
}

/// The involution `G: (x,y,z,X) -> (-x,-y,Kz,-X)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InvolutionSpec {
    pub p: usize,
    pub k: DMatrix<f64>,
    pub dims: Dims,
}

impl InvolutionSpec {
    pub fn new(k: DMatrix<f64>, dims: Dims) -> Result<Self> {
        if k.nrows() != k.ncols() || k.nrows() % 2 != 0 {
            return Err(Error::BadDims(format!(
                "K must be square of even size, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        if k.nrows() != 2 * dims.p {
            return Err(Error::BadDims(format!(
                "K is {}x{} but 2p = {}",
                k.nrows(),
                k.ncols(),
                2 * dims.p
            )));
        }
        Ok(Self {
            p: dims.p,
            k,
            dims,
        })
    }

    /// `K = diag(I_p, -I_p)`.
    pub fn standard(dims: Dims) -> Self {
        let p = dims.p;
        let k = DMatrix::from_fn(2 * p, 2 * p, |i, j| match (i == j, i < p) {
            (true, true) => 1.0,
            (true, false) => -1.0,
            _ => 0.0,
        });
        Self { p, k, dims }
    }
}

/// A point `(x, y, z, X)` of the extended phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub forcing: Vec<f64>,
}

impl PhasePoint {
    pub fn zeros(dims: &Dims) -> Self {
        Self {
            x: vec![0.0; dims.n],
            y: vec![0.0; dims.m],
            z: vec![0.0; 2 * dims.p],
            forcing: vec![0.0; dims.forcing],
        }
    }

    pub fn from_flat(dims: &Dims, v: &[f64]) -> Self {
        Self {
            x: v[..dims.n].to_vec(),
            y: v[dims.y_range()].to_vec(),
            z: v[dims.z_range()].to_vec(),
            forcing: v[dims.forcing_range()].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.x.len() + self.y.len() + self.z.len() + self.forcing.len());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v.extend_from_slice(&self.z);
        v.extend_from_slice(&self.forcing);
        v
    }

    fn matches(&self, dims: &Dims) -> bool {
        self.x.len() == dims.n
            && self.y.len() == dims.m
            && self.z.len() == 2 * dims.p
            && self.forcing.len() == dims.forcing
    }
}

/// Reduce an angle to `[0, 2 pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed distance between two angles, in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Image of `point` under `G`, angles reduced to `[0, 2 pi)`.
pub fn apply_involution(inv: &InvolutionSpec, point: &PhasePoint) -> Result<PhasePoint> {
    if !point.matches(&inv.dims) {
        return Err(Error::DimensionMismatch(format!(
            "point has dims ({}, {}, {}, {}) but the involution expects ({}, {}, {}, {})",
            point.x.len(),
            point.y.len(),
            point.z.len(),
            point.forcing.len(),
            inv.dims.n,
            inv.dims.m,
            2 * inv.dims.p,
            inv.dims.forcing
        )));
    }
    let z = &inv.k * nalgebra::DVector::from_column_slice(&point.z);
    Ok(PhasePoint {
        x: point.x.iter().map(|a| wrap_angle(-a)).collect(),
        y: point.y.iter().map(|v| -v).collect(),
        z: z.as_slice().to_vec(),
        forcing: point.forcing.iter().map(|a| wrap_angle(-a)).collect(),
    })
}

/// Reversible context of an invariant torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Context {
    Context1,
    Context2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextLabel {
    pub context: Context,
    /// `(P, Q - torus_dim)`
    pub characteristic: (usize, usize),
}

/// Context 1 iff `P >= Q - torus_dim`.
pub fn context_classify(fix_dim: usize, codim: usize, torus_dim: usize) -> Result<ContextLabel> {
    if codim < torus_dim {
        return Err(Error::BadDims(format!(
            "codim Fix G = {codim} is smaller than the torus dimension {torus_dim}"
        )));
    }
    let normal = codim - torus_dim;
    let context = if fix_dim >= normal {
        Context::Context1
    } else {
        Context::Context2
    };
    Ok(ContextLabel {
        context,
        characteristic: (fix_dim, normal),
    })
}

/// Sampling domain for `y`, `z`, `nu` and `eps`.
///
/// The `z` domain is `{ |z| <= r, |Kz| <= r }`, which is invariant under
/// `z -> Kz` for every involutive `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub y_radius: f64,
    pub z_radius: f64,
    #[serde(default)]
    pub nu_center: Vec<f64>,
    pub nu_radius: f64,
    pub eps_max: f64,
}

impl Domain {
    pub fn unit(dims: &Dims) -> Self {
        Self {
            y_radius: 1.0,
            z_radius: 1.0,
            nu_center: vec![0.0; dims.s],
            nu_radius: 0.1,
            eps_max: 0.05,
        }
    }

    pub fn contains_y(&self, y: &[f64]) -> bool {
        y.iter().all(|v| v.abs() <= self.y_radius)
    }

    pub fn contains_z(&self, z: &[f64], k: &DMatrix<f64>) -> bool {
        let zv = nalgebra::DVector::from_column_slice(z);
        zv.norm() <= self.z_radius && (k * &zv).norm() <= self.z_radius
    }
}

/// The component maps of the system.
#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    /// `H(y, nu)`, values in R^n
    pub freq: TrigPoly,
    /// `Xi(y, nu)`, values in R^m
    pub xi: TrigPoly,
    /// `Lambda(y, nu)`, row-major 2p x 2p
    pub lambda: TrigPoly,
    pub f_sharp: TrigPoly,
    pub g_sharp: TrigPoly,
    pub h_sharp: TrigPoly,
    pub f: TrigPoly,
    pub g: TrigPoly,
    pub h: TrigPoly,
    /// Extra `X'` term `eps * drift`. Empty for every member of the family;
    /// exists to probe the solver with inputs outside it.
    pub drift: TrigPoly,
}

impl Components {
    pub fn zero(dims: &Dims) -> Self {
        let na = dims.torus_dim();
        let nv = dims.n_vars();
        let p2 = 2 * dims.p;
        Self {
            freq: TrigPoly::zero(dims.n, na, nv),
            xi: TrigPoly::zero(dims.m, na, nv),
            lambda: TrigPoly::zero(p2 * p2, na, nv),
            f_sharp: TrigPoly::zero(dims.n, na, nv),
            g_sharp: TrigPoly::zero(dims.m, na, nv),
            h_sharp: TrigPoly::zero(p2, na, nv),
            f: TrigPoly::zero(dims.n, na, nv),
            g: TrigPoly::zero(dims.m, na, nv),
            h: TrigPoly::zero(p2, na, nv),
            drift: TrigPoly::zero(dims.forcing, na, nv),
        }
    }

    fn named(&self) -> [(&'static str, &TrigPoly); 10] {
        [
            ("H", &self.freq),
            ("Xi", &self.xi),
            ("Lambda", &self.lambda),
            ("f_sharp", &self.f_sharp),
            ("g_sharp", &self.g_sharp),
            ("h_sharp", &self.h_sharp),
            ("f", &self.f),
            ("g", &self.g),
            ("h", &self.h),
            ("drift", &self.drift),
        ]
    }
}

/// Value and first derivatives of the vector field.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub value: Vec<f64>,
    /// `d V / d state`, `d x d`
    pub d_state: DMatrix<f64>,
    /// `d V / d nu`, `d x s`
    pub d_nu: DMatrix<f64>,
}

/// A family of systems of the form above.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemFamily {
    dims: Dims,
    forcing_freq: Vec<f64>,
    domain: Domain,
    comps: Components,
}

impl SystemFamily {
    pub fn new(dims: Dims, forcing_freq: Vec<f64>, domain: Domain, comps: Components) -> Result<Self> {
        if forcing_freq.len() != dims.forcing {
            return Err(Error::DimensionMismatch(format!(
                "Omega has length {}, expected N = {}",
                forcing_freq.len(),
                dims.forcing
            )));
        }
        let na = dims.torus_dim();
        let nv = dims.n_vars();
        let p2 = 2 * dims.p;
        let expected = [dims.n, dims.m, p2 * p2, dims.n, dims.m, p2, dims.n, dims.m, p2, dims.forcing];
        for ((name, poly), out) in comps.named().iter().zip(expected) {
            if poly.out_dim() != out || poly.n_angles() != na || poly.n_vars() != nv {
                return Err(Error::DimensionMismatch(format!(
                    "component {name} has shape (out {}, angles {}, vars {}), expected ({out}, {na}, {nv})",
                    poly.out_dim(),
                    poly.n_angles(),
                    poly.n_vars()
                )));
            }
        }
        let z_vars = dims.m..dims.m + p2;
        let eps_var = nv - 1..nv;
        for (name, poly) in [("H", &comps.freq), ("Xi", &comps.xi), ("Lambda", &comps.lambda)] {
            if poly.depends_on_angles(0..na) || poly.depends_on_vars(z_vars.clone()) || poly.depends_on_vars(eps_var.clone()) {
                return Err(Error::BadDims(format!("{name} may depend on y and nu only")));
            }
        }
        for (name, poly) in [("f_sharp", &comps.f_sharp), ("g_sharp", &comps.g_sharp), ("h_sharp", &comps.h_sharp)] {
            if poly.depends_on_angles(dims.n..na) || poly.depends_on_vars(eps_var.clone()) {
                return Err(Error::BadDims(format!("{name} may not depend on X or eps")));
            }
        }
        if domain.nu_center.len() != dims.s && !domain.nu_center.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "domain nu_center has length {}, expected s = {}",
                domain.nu_center.len(),
                dims.s
            )));
        }
        let mut domain = domain;
        if domain.nu_center.is_empty() {
            domain.nu_center = vec![0.0; dims.s];
        }
        Ok(Self {
            dims,
            forcing_freq,
            domain,
            comps,
        })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn forcing_freq(&self) -> &[f64] {
        &self.forcing_freq
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn components(&self) -> &Components {
        &self.comps
    }

    /// Replaces the `X'` drift term; used to build deliberately non-reversible inputs.
    pub fn with_drift(mut self, drift: TrigPoly) -> Result<Self> {
        let d = &self.dims;
        if drift.out_dim() != d.forcing || drift.n_angles() != d.torus_dim() || drift.n_vars() != d.n_vars() {
            return Err(Error::DimensionMismatch("drift term has the wrong shape".into()));
        }
        self.comps.drift = drift;
        Ok(self)
    }

    pub(crate) fn split(&self, state: &[f64], nu: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
        let d = &self.dims;
        let mut angles = Vec::with_capacity(d.torus_dim());
        angles.extend_from_slice(&state[..d.n]);
        angles.extend_from_slice(&state[d.forcing_range()]);
        let mut vars = Vec::with_capacity(d.n_vars());
        vars.extend_from_slice(&state[d.n..d.n + d.m + 2 * d.p]);
        vars.extend_from_slice(nu);
        vars.push(eps);
        (angles, vars)
    }

    fn yz_vars(&self, y: &[f64], nu: &[f64]) -> Vec<f64> {
        let d = &self.dims;
        let mut vars = vec![0.0; d.n_vars()];
        vars[..d.m].copy_from_slice(y);
        vars[d.m + 2 * d.p..d.m + 2 * d.p + d.s].copy_from_slice(nu);
        vars
    }

    /// `H(y, nu)`.
    pub fn freq_at(&self, y: &[f64], nu: &[f64]) -> Vec<f64> {
        let angles = vec![0.0; self.dims.torus_dim()];
        self.comps.freq.eval(&angles, &self.yz_vars(y, nu))
    }

    /// `Xi(y, nu)`.
    pub fn xi_at(&self, y: &[f64], nu: &[f64]) -> Vec<f64> {
        let angles = vec![0.0; self.dims.torus_dim()];
        self.comps.xi.eval(&angles, &self.yz_vars(y, nu))
    }

    /// `Lambda(y, nu)`.
    pub fn lambda_at(&self, y: &[f64], nu: &[f64]) -> DMatrix<f64> {
        let p2 = 2 * self.dims.p;
        let angles = vec![0.0; self.dims.torus_dim()];
        let v = self.comps.lambda.eval(&angles, &self.yz_vars(y, nu));
        DMatrix::from_row_slice(p2, p2, &v)
    }

    /// Right-hand side at `state` with the forcing row `Omega + shift`.
    pub fn vector_field(&self, state: &[f64], nu: &[f64], eps: f64, shift: &[f64]) -> Vec<f64> {
        let d = &self.dims;
        let (angles, vars) = self.split(state, nu, eps);
        let mut out = vec![0.0; d.phase_dim()];
        let (x_rows, rest) = out.split_at_mut(d.n);
        let (y_rows, rest) = rest.split_at_mut(d.m);
        let (z_rows, f_rows) = rest.split_at_mut(2 * d.p);

        let c = &self.comps;
        c.freq.eval_into(&angles, &vars, 1.0, x_rows);
        c.f_sharp.eval_into(&angles, &vars, 1.0, x_rows);
        c.f.eval_into(&angles, &vars, eps, x_rows);

        c.xi.eval_into(&angles, &vars, 1.0, y_rows);
        c.g_sharp.eval_into(&angles, &vars, 1.0, y_rows);
        c.g.eval_into(&angles, &vars, eps, y_rows);

        let p2 = 2 * d.p;
        let lam = c.lambda.eval(&angles, &vars);
        let z = &state[d.z_range()];
        for i in 0..p2 {
            z_rows[i] = (0..p2).map(|j| lam[i * p2 + j] * z[j]).sum();
        }
        c.h_sharp.eval_into(&angles, &vars, 1.0, z_rows);
        c.h.eval_into(&angles, &vars, eps, z_rows);

        for (i, r) in f_rows.iter_mut().enumerate() {
            *r = self.forcing_freq[i] + shift.get(i).copied().unwrap_or(0.0);
        }
        c.drift.eval_into(&angles, &vars, eps, f_rows);
        out
    }

    /// Value of the right-hand side and its derivatives with respect to the
    /// state and to `nu`.
    pub fn jacobian(&self, state: &[f64], nu: &[f64], eps: f64, shift: &[f64]) -> FieldJet {
        let d = &self.dims;
        let dim = d.phase_dim();
        let (angles, vars) = self.split(state, nu, eps);
        let mut jet = FieldJet {
            value: vec![0.0; dim],
            d_state: DMatrix::zeros(dim, dim),
            d_nu: DMatrix::zeros(dim, d.s),
        };
        let c = &self.comps;
        let x0 = 0;
        let y0 = d.n;
        let z0 = d.n + d.m;
        let f0 = d.n + d.m + 2 * d.p;

        self.accumulate(&mut jet, &c.freq, x0, 1.0, &angles, &vars);
        self.accumulate(&mut jet, &c.f_sharp, x0, 1.0, &angles, &vars);
        self.accumulate(&mut jet, &c.f, x0, eps, &angles, &vars);
        self.accumulate(&mut jet, &c.xi, y0, 1.0, &angles, &vars);
        self.accumulate(&mut jet, &c.g_sharp, y0, 1.0, &angles, &vars);
        self.accumulate(&mut jet, &c.g, y0, eps, &angles, &vars);
        self.accumulate(&mut jet, &c.h_sharp, z0, 1.0, &angles, &vars);
        self.accumulate(&mut jet, &c.h, z0, eps, &angles, &vars);
        self.accumulate(&mut jet, &c.drift, f0, eps, &angles, &vars);

        // Lambda(y, nu) z
        let p2 = 2 * d.p;
        let lam = c.lambda.jet(&angles, &vars);
        let z = &state[d.z_range()];
        let nv = d.n_vars();
        for i in 0..p2 {
            let mut v = 0.0;
            for j in 0..p2 {
                let e = i * p2 + j;
                v += lam.value[e] * z[j];
                jet.d_state[(z0 + i, z0 + j)] += lam.value[e];
                for a in 0..d.m {
                    jet.d_state[(z0 + i, y0 + a)] += lam.d_vars[e * nv + a] * z[j];
                }
                for b in 0..d.s {
                    jet.d_nu[(z0 + i, b)] += lam.d_vars[e * nv + d.m + p2 + b] * z[j];
                }
            }
            jet.value[z0 + i] += v;
        }
        for i in 0..d.forcing {
            jet.value[f0 + i] += self.forcing_freq[i] + shift.get(i).copied().unwrap_or(0.0);
        }
        jet
    }

    fn accumulate(&self, jet: &mut FieldJet, poly: &TrigPoly, row0: usize, weight: f64, angles: &[f64], vars: &[f64]) {
        if poly.is_empty() || weight == 0.0 {
            return;
        }
        let d = &self.dims;
        let na = d.torus_dim();
        let nv = d.n_vars();
        let local = poly.jet(angles, vars);
        let ny = d.m + 2 * d.p;
        for i in 0..poly.out_dim() {
            let r = row0 + i;
            jet.value[r] += weight * local.value[i];
            for a in 0..na {
                let col = if a < d.n { a } else { d.n + ny + (a - d.n) };
                jet.d_state[(r, col)] += weight * local.d_angles[i * na + a];
            }
            for v in 0..ny {
                jet.d_state[(r, d.n + v)] += weight * local.d_vars[i * nv + v];
            }
            for b in 0..d.s {
                jet.d_nu[(r, b)] += weight * local.d_vars[i * nv + ny + b];
            }
        }
    }
}
