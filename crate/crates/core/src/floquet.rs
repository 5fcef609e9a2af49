//! Floquet reduction of the transverse variational equations along a torus,
//! and spectra of matrices anti-commuting with an involution.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FourierField, Grid, ModeSet, Parity, C64};
use crate::linalg::{complex_eigenvalues, eigenvalues, hungarian, numerical_rank, solve_sylvester};
use crate::model::SystemFamily;
use crate::ode::{dopri5, OdeOptions};
use crate::torus::{embedding_jet, embedding_jet_grid, TorusEmbedding};

/// `L0 K + K L0` tolerance.
pub const ANTICOMMUTE_TOL: f64 = 1e-10;
/// Minimal pairwise eigenvalue gap for a simple spectrum.
pub const SIMPLE_GAP: f64 = 1e-8;
/// Zero exponents and beta deviations are judged at this tolerance.
pub const EXPONENT_TOL: f64 = 1e-8;
/// Separates real, imaginary and complex exponents.
const CLASS_TOL: f64 = 1e-6;

/// Shape of the spectrum of `Lambda(0, nu)`: `d1` real pairs `+-alpha`, `d2`
/// imaginary pairs `+-i beta`, `d3` quadruples `+-alpha +- i beta`.
///
/// `alpha` lists the real pairs then the quadruples, `beta` the imaginary
/// pairs then the quadruples; `frozen` indexes into `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTemplate {
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub frozen: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentClass {
    Zero,
    RealPair,
    ImaginaryPair,
    Quadruple,
}

/// One member of the template's exponent list.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Slot {
    class: ExponentClass,
    alpha: Option<usize>,
    beta: Option<usize>,
    /// signs of the real and imaginary parts
    sign: (f64, f64),
    value: C64,
}

impl SpectrumTemplate {
    pub fn new(d1: usize, d2: usize, d3: usize, alpha: Vec<f64>, beta: Vec<f64>, frozen: Vec<usize>) -> Result<Self> {
        let t = Self {
            d1,
            d2,
            d3,
            alpha,
            beta,
            frozen,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn p(&self) -> usize {
        self.d1 + self.d2 + 2 * self.d3
    }

    pub fn kappa(&self) -> usize {
        self.frozen.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.d1 + self.d3 || self.beta.len() != self.d2 + self.d3 {
            return Err(Error::BadDims(format!(
                "template needs {} alpha and {} beta values, got {} and {}",
                self.d1 + self.d3,
                self.d2 + self.d3,
                self.alpha.len(),
                self.beta.len()
            )));
        }
        if self.alpha.iter().chain(&self.beta).any(|v| !(*v > 0.0)) {
            return Err(Error::BadDims("alpha and beta must be positive".into()));
        }
        let mut seen = vec![false; self.alpha.len()];
        for &k in &self.frozen {
            if k >= self.alpha.len() || std::mem::replace(&mut seen[k], true) {
                return Err(Error::BadDims(format!("frozen index {k} is invalid or repeated")));
            }
        }
        let ev: Vec<C64> = self.slots().iter().map(|s| s.value).collect();
        let gap = min_gap(&ev);
        if gap <= SIMPLE_GAP {
            return Err(Error::DegenerateSpectrum { gap });
        }
        Ok(())
    }

    fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::with_capacity(2 * self.p());
        for (k, &a) in self.alpha[..self.d1].iter().enumerate() {
            for s in [1.0, -1.0] {
                out.push(Slot {
                    class: ExponentClass::RealPair,
                    alpha: Some(k),
                    beta: None,
                    sign: (s, 0.0),
                    value: C64::new(s * a, 0.0),
                });
            }
        }
        for (l, &b) in self.beta[..self.d2].iter().enumerate() {
            for s in [1.0, -1.0] {
                out.push(Slot {
                    class: ExponentClass::ImaginaryPair,
                    alpha: None,
                    beta: Some(l),
                    sign: (0.0, s),
                    value: C64::new(0.0, s * b),
                });
            }
        }
        for i in 0..self.d3 {
            let (k, l) = (self.d1 + i, self.d2 + i);
            for sr in [1.0, -1.0] {
                for si in [1.0, -1.0] {
                    out.push(Slot {
                        class: ExponentClass::Quadruple,
                        alpha: Some(k),
                        beta: Some(l),
                        sign: (sr, si),
                        value: C64::new(sr * self.alpha[k], si * self.beta[l]),
                    });
                }
            }
        }
        out
    }

    /// The `2p` nonzero exponents in template order.
    pub fn exponents(&self) -> Vec<C64> {
        self.slots().iter().map(|s| s.value).collect()
    }

    /// Builds a real `2p x 2p` matrix with this spectrum that anti-commutes
    /// with `diag(I_p, -I_p)`.
    pub fn normal_form(&self) -> DMatrix<f64> {
        let p = self.p();
        let mut lam = DMatrix::zeros(2 * p, 2 * p);
        // off-diagonal blocks P (u <- v) and Q (v <- u); spectrum of L is +-sqrt(spec(PQ))
        let mut put = |i: usize, j: usize, pij: f64, qji: f64| {
            lam[(i, p + j)] = pij;
            lam[(p + j, i)] = qji;
        };
        let mut r = 0;
        for &a in &self.alpha[..self.d1] {
            put(r, r, a, a);
            r += 1;
        }
        for &b in &self.beta[..self.d2] {
            put(r, r, b, -b);
            r += 1;
        }
        for i in 0..self.d3 {
            let (a, b) = (self.alpha[self.d1 + i], self.beta[self.d2 + i]);
            // P = Q = a I + b J with J the rotation generator; (aI + bJ)^2 has eigenvalues (a +- ib)^2
            put(r, r, a, a);
            put(r + 1, r + 1, a, a);
            put(r, r + 1, -b, b);
            put(r + 1, r, b, -b);
            r += 2;
        }
        lam
    }
}

fn min_gap(ev: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            gap = gap.min((ev[i] - ev[j]).norm());
        }
    }
    gap
}


/// Classifies the spectrum of a matrix anti-commuting with `k` into real
/// pairs, imaginary pairs and quadruples. `alpha` and `beta` are returned in
/// ascending order within each class.
pub fn anticommuting_spectrum_classify(l0: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<SpectrumTemplate> {
    if l0.shape() != k.shape() || l0.nrows() % 2 != 0 {
        return Err(Error::DimensionMismatch("L0 and K must be square of equal even size".into()));
    }
    let scale = l0.norm().max(1.0);
    let defect = (l0 * k + k * l0).amax();
    if defect > ANTICOMMUTE_TOL * scale {
        return Err(Error::NotAnticommuting { defect });
    }
    let ev = eigenvalues(l0);
    let gap = min_gap(&ev);
    if gap <= SIMPLE_GAP {
        return Err(Error::DegenerateSpectrum { gap });
    }
    let tol = CLASS_TOL * scale;
    let (mut reals, mut imags, mut quads) = (Vec::new(), Vec::new(), Vec::new());
    for z in &ev {
        let (re, im) = (z.re, z.im);
        if im.abs() <= tol && re > 0.0 {
            reals.push(re);
        } else if re.abs() <= tol && im > 0.0 {
            imags.push(im);
        } else if re > tol && im > tol {
            quads.push((re, im));
        }
    }
    reals.sort_by(f64::total_cmp);
    imags.sort_by(f64::total_cmp);
    quads.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (d1, d2, d3) = (reals.len(), imags.len(), quads.len());
    if 2 * (d1 + d2 + 2 * d3) != ev.len() {
        return Err(Error::DegenerateSpectrum { gap: 0.0 });
    }
    let mut alpha = reals;
    alpha.extend(quads.iter().map(|q| q.0));
    let mut beta = imags;
    beta.extend(quads.iter().map(|q| q.1));
    SpectrumTemplate::new(d1, d2, d3, alpha, beta, Vec::new())
}

/// Random matrix anti-commuting with `diag(I_P, -I_Q)`.
pub fn random_anticommuting(p_mult: usize, q_mult: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = p_mult + q_mult;
    let mut l = DMatrix::zeros(n, n);
    for i in 0..p_mult {
        for j in p_mult..n {
            l[(i, j)] = rng.random_range(-1.0..1.0);
            l[(j, i)] = rng.random_range(-1.0..1.0);
        }
    }
    l
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub p_mult: usize,
    pub q_mult: usize,
    pub trials: usize,
    pub required_kernel: usize,
    pub kernel_passes: usize,
    pub pairing_passes: usize,
    pub min_kernel: usize,
    pub max_kernel: usize,
    pub passed: bool,
}

/// Largest distance between the spectrum and its negation after optimal matching.
pub fn pairing_defect(ev: &[C64]) -> f64 {
    let n = ev.len();
    let cost = DMatrix::from_fn(n, n, |i, j| (ev[i] + ev[j]).norm());
    let assign = hungarian(&cost);
    assign.iter().enumerate().fold(0.0, |m, (i, &j)| m.max(cost[(i, j)]))
}

/// Checks on random draws that a matrix anti-commuting with
/// `diag(I_P, -I_Q)` has kernel dimension at least `|P - Q|` and a spectrum
/// symmetric under `lambda -> -lambda`.
pub fn zero_multiplicity_check(p_mult: usize, q_mult: usize, trials: usize, seed: u64) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let required = p_mult.abs_diff(q_mult);
    let n = p_mult + q_mult;
    let mut rep = PropertyReport {
        p_mult,
        q_mult,
        trials,
        required_kernel: required,
        kernel_passes: 0,
        pairing_passes: 0,
        min_kernel: usize::MAX,
        max_kernel: 0,
        passed: false,
    };
    for _ in 0..trials {
        let l = random_anticommuting(p_mult, q_mult, &mut rng);
        let kernel = n - numerical_rank(&l, 1e-10);
        rep.min_kernel = rep.min_kernel.min(kernel);
        rep.max_kernel = rep.max_kernel.max(kernel);
        if kernel >= required {
            rep.kernel_passes += 1;
        }
        let ev = eigenvalues(&l);
        if pairing_defect(&ev) <= 1e-8 * l.norm().max(1.0) {
            rep.pairing_passes += 1;
        }
    }
    rep.passed = trials > 0 && rep.kernel_passes == trials && rep.pairing_passes == trials;
    rep
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloquetOptions {
    pub divisor_floor: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Largest reduction residual accepted as success.
    pub accept: f64,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self {
            divisor_floor: 1e-10,
            tol: 1e-13,
            max_iter: 40,
            accept: 1e-9,
        }
    }
}

/// Reducing transformation `W(theta)` and Floquet matrix `L` of the
/// transverse `(y, z)` block.
#[derive(Clone, Debug)]
pub struct FloquetData {
    pub m: usize,
    /// Entries of `W` in row-major order.
    pub w: FourierField,
    pub l: DMatrix<f64>,
    pub exponents: Vec<C64>,
    /// Sup norm of `d_w W - M W + W L` on the grid.
    pub defect: f64,
    pub min_singular: f64,
    pub iterations: usize,
}

impl FloquetData {
    pub fn w_at(&self, theta: &[f64]) -> DMatrix<f64> {
        let nn = self.l.nrows();
        DMatrix::from_row_slice(nn, nn, &self.w.eval(theta))
    }
}

/// Normal-bundle variational matrix `M(theta)` on a grid of `size` points
/// per angle, row-major `(m+2p)^2` values per point.
///
/// With `DK = [T_t; T_n]` split into tangential `(x, X)` and normal `(y, z)`
/// rows, `M = DV_nn - T_n T_t^{-1} DV_tn`.
pub fn normal_variational_grid(t: &TorusEmbedding, sys: &SystemFamily, size: usize) -> Result<Grid> {
    let d = *sys.dims();
    let nn = d.m + 2 * d.p;
    let (emb, dk) = embedding_jet_grid(t, size);
    let mut out = Grid::zeros(d.torus_dim(), size, nn * nn);
    for pt in 0..emb.points() {
        let m = normal_matrix(t, sys, emb.value(pt), dk.value(pt))?;
        let slot = out.value_mut(pt);
        for i in 0..nn {
            for j in 0..nn {
                slot[i * nn + j] = m[(i, j)];
            }
        }
    }
    Ok(out)
}

/// `M(theta)` at a single angle.
pub fn normal_variational_at(t: &TorusEmbedding, sys: &SystemFamily, theta: &[f64]) -> Result<DMatrix<f64>> {
    let (value, dk) = embedding_jet(t, theta);
    normal_matrix(t, sys, &value, &dk)
}

fn normal_matrix(t: &TorusEmbedding, sys: &SystemFamily, state: &[f64], dkp: &[f64]) -> Result<DMatrix<f64>> {
    let d = *sys.dims();
    let (na, nn) = (d.torus_dim(), d.m + 2 * d.p);
    let tang: Vec<usize> = (0..d.n).chain(d.forcing_range()).collect();
    let norm: Vec<usize> = (d.n..d.n + nn).collect();
    let jet = sys.jacobian(state, &t.nu, t.eps, &t.theta);
    let tt = DMatrix::from_fn(na, na, |i, j| dkp[tang[i] * na + j]);
    let tn = DMatrix::from_fn(nn, na, |i, j| dkp[norm[i] * na + j]);
    let dv_tn = DMatrix::from_fn(na, nn, |i, j| jet.d_state[(tang[i], norm[j])]);
    let dv_nn = DMatrix::from_fn(nn, nn, |i, j| jet.d_state[(norm[i], norm[j])]);
    if tn.iter().all(|v| *v == 0.0) {
        return Ok(dv_nn);
    }
    let x = tt
        .lu()
        .solve(&dv_tn)
        .ok_or_else(|| Error::NoConvergence("torus tangent frame is singular".into()))?;
    Ok(dv_nn - &tn * x)
}

/// `diag(0_m, Lambda(0, nu))`.
pub fn unperturbed_floquet_matrix(sys: &SystemFamily, nu: &[f64]) -> DMatrix<f64> {
    let d = sys.dims();
    let nn = d.m + 2 * d.p;
    let lam = sys.lambda_at(&vec![0.0; d.m], nu);
    let mut l0 = DMatrix::zeros(nn, nn);
    l0.view_mut((d.m, d.m), (2 * d.p, 2 * d.p)).copy_from(&lam);
    l0
}

/// Complex eigenbasis of `diag(0_m, Lambda)`: unit vectors on the `y` block,
/// null vectors of `Lambda - lambda` elsewhere, conjugate pairs paired.
fn eigenbasis(l0: &DMatrix<f64>, m: usize) -> Result<(DMatrix<C64>, Vec<C64>)> {
    let nn = l0.nrows();
    let lam = l0.view((m, m), (nn - m, nn - m)).clone_owned();
    let ev = eigenvalues(&lam);
    let mut basis = DMatrix::<C64>::zeros(nn, nn);
    let mut values = vec![C64::new(0.0, 0.0); nn];
    for i in 0..m {
        basis[(i, i)] = C64::new(1.0, 0.0);
    }
    let lc = lam.map(|v| C64::new(v, 0.0));
    let mut col = m;
    let mut used = vec![false; ev.len()];
    for i in 0..ev.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let z = ev[i];
        let v = null_vector(&lc, z)?;
        put_column(&mut basis, col, m, &v);
        values[col] = z;
        col += 1;
        if z.im.abs() > 0.0 {
            // partner eigenvalue closest to conj(z)
            let j = (0..ev.len())
                .filter(|&j| !used[j])
                .min_by(|&a, &b| (ev[a] - z.conj()).norm().total_cmp(&(ev[b] - z.conj()).norm()))
                .ok_or(Error::DegenerateSpectrum { gap: 0.0 })?;
            used[j] = true;
            let vc: Vec<C64> = v.iter().map(|c| c.conj()).collect();
            put_column(&mut basis, col, m, &vc);
            values[col] = z.conj();
            col += 1;
        }
    }
    Ok((basis, values))
}

fn put_column(basis: &mut DMatrix<C64>, col: usize, offset: usize, v: &[C64]) {
    for (i, c) in v.iter().enumerate() {
        basis[(offset + i, col)] = *c;
    }
}

fn null_vector(a: &DMatrix<C64>, z: C64) -> Result<Vec<C64>> {
    let n = a.nrows();
    let shifted = a - DMatrix::<C64>::identity(n, n) * z;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::NoConvergence("SVD failed".into()))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::DegenerateSpectrum { gap: 0.0 })?;
    let mut v: Vec<C64> = vt.row(imin).iter().map(|c| c.conj()).collect();
    // fix the phase so the largest entry is real positive
    let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(C64::new(1.0, 0.0));
    let ph = big.conj() / big.norm();
    v.iter_mut().for_each(|c| *c *= ph);
    Ok(v)
}

/// Complex matrix-valued samples on the torus grid.
struct MatGrid {
    n_angles: usize,
    size: usize,
    nn: usize,
    data: Vec<DMatrix<C64>>,
}

impl MatGrid {
    fn points(&self) -> usize {
        self.data.len()
    }

    /// Truncated Fourier coefficients `|k_a| <= modes`, one matrix per mode.
    fn coefficients(&self, modes: ModeSet) -> Vec<DMatrix<C64>> {
        let mut out = vec![DMatrix::<C64>::zeros(self.nn, self.nn); modes.len()];
        let mut re = Grid::zeros(self.n_angles, self.size, self.nn * self.nn);
        let mut im = re.clone();
        for (p, m) in self.data.iter().enumerate() {
            for i in 0..self.nn {
                for j in 0..self.nn {
                    re.data[p * self.nn * self.nn + i * self.nn + j] = m[(i, j)].re;
                    im.data[p * self.nn * self.nn + i * self.nn + j] = m[(i, j)].im;
                }
            }
        }
        let fr = FourierField::from_grid(&re, modes, Parity::None);
        let fi = FourierField::from_grid(&im, modes, Parity::None);
        for (mode, o) in out.iter_mut().enumerate() {
            for i in 0..self.nn {
                for j in 0..self.nn {
                    let e = i * self.nn + j;
                    o[(i, j)] = fr.coeff(mode, e) + C64::new(0.0, 1.0) * fi.coeff(mode, e);
                }
            }
        }
        out
    }

    fn from_coefficients(coeffs: &[DMatrix<C64>], modes: ModeSet, size: usize, nn: usize) -> Self {
        let pts = size.pow(modes.n_angles as u32);
        let mut data = vec![DMatrix::<C64>::zeros(nn, nn); pts];
        // evaluate by direct summation through two real transforms
        let mut fr = FourierField::zeros(modes, nn * nn, Parity::None);
        let mut fi = fr.clone();
        // a complex series c_k e^{ik theta} = (Re part) + i (Im part) where each part
        // has Hermitian coefficients (c_k + conj c_{-k})/2 and (c_k - conj c_{-k})/(2i)
        for mode in 0..modes.len() {
            let neg = modes.neg(mode);
            for e in 0..nn * nn {
                let (i, j) = (e / nn, e % nn);
                let a = coeffs[mode][(i, j)];
                let b = coeffs[neg][(i, j)].conj();
                fr.coeffs_mut()[mode * nn * nn + e] = (a + b) * 0.5;
                fi.coeffs_mut()[mode * nn * nn + e] = (a - b) * C64::new(0.0, -0.5);
            }
        }
        let gr = fr.to_grid(size);
        let gi = fi.to_grid(size);
        for (p, m) in data.iter_mut().enumerate() {
            for e in 0..nn * nn {
                m[(e / nn, e % nn)] = C64::new(gr.data[p * nn * nn + e], gi.data[p * nn * nn + e]);
            }
        }
        Self {
            n_angles: modes.n_angles,
            size,
            nn,
            data,
        }
    }
}

fn sup(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, c| acc.max(c.norm()))
}

/// Reduces the transverse variational equation of a solved torus to
/// constant coefficients.
pub fn reduce_variational(t: &TorusEmbedding, sys: &SystemFamily) -> Result<FloquetData> {
    reduce_variational_with(t, sys, &FloquetOptions::default())
}

pub fn reduce_variational_with(t: &TorusEmbedding, sys: &SystemFamily, opts: &FloquetOptions) -> Result<FloquetData> {
    let d = *sys.dims();
    let (m, nn, na) = (d.m, d.m + 2 * d.p, d.torus_dim());
    let modes = t.modes();
    let size = 2 * (2 * modes.modes + 1);
    let freq = t.freq.clone();
    let mgrid = normal_variational_grid(t, sys, size)?;
    let l0 = unperturbed_floquet_matrix(sys, &t.nu);

    let identity_w = || {
        let mut w = FourierField::zeros(modes, nn * nn, Parity::None);
        for i in 0..nn {
            w.set_real_mode(&vec![0; na], i * nn + i, C64::new(1.0, 0.0));
        }
        w
    };
    let constant = (0..mgrid.points()).all(|p| mgrid.value(p).iter().zip(l0.transpose().iter()).all(|(a, b)| a == b));
    if constant {
        let exponents = block_exponents(&l0_tilde_blocks(&l0, m)?);
        return Ok(FloquetData {
            m,
            w: identity_w(),
            l: l0,
            exponents,
            defect: 0.0,
            min_singular: 1.0,
            iterations: 0,
        });
    }

    let (s, lam) = eigenbasis(&l0, m)?;
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::ReducibilityBreakdown { wave: vec![0; na], divisor: 0.0, floor: opts.divisor_floor })?;
    let mt: Vec<DMatrix<C64>> = (0..mgrid.points())
        .map(|p| {
            let mp = DMatrix::from_row_slice(nn, nn, mgrid.value(p)).map(|v| C64::new(v, 0.0));
            &s_inv * mp * &s
        })
        .collect();

    // clusters: the y block and singletons
    let mut clusters: Vec<std::ops::Range<usize>> = Vec::new();
    if m > 0 {
        clusters.push(0..m);
    }
    clusters.extend((m..nn).map(|i| i..i + 1));

    let l_init = DMatrix::<C64>::from_diagonal(&nalgebra::DVector::from_vec(lam.clone()));
    let mut lt = l_init.clone();
    let mut wt_coef = vec![DMatrix::<C64>::zeros(nn, nn); modes.len()];
    wt_coef[modes.zero_index()] = DMatrix::identity(nn, nn);

    let kdot: Vec<f64> = (0..modes.len())
        .map(|i| modes.wave(i).iter().zip(&freq).map(|(&k, &f)| k as f64 * f).sum())
        .collect();

    let mut iterations = 0;
    let mut best = f64::INFINITY;
    let mut stalls = 0;
    loop {
        let wt = MatGrid::from_coefficients(&wt_coef, modes, size, nn);
        let dcoef: Vec<DMatrix<C64>> = wt_coef.iter().zip(&kdot).map(|(c, &w)| c * C64::new(0.0, w)).collect();
        let dwt = MatGrid::from_coefficients(&dcoef, modes, size, nn);
        let mut r = MatGrid {
            n_angles: na,
            size,
            nn,
            data: Vec::with_capacity(wt.points()),
        };
        let mut rmax: f64 = 0.0;
        for p in 0..wt.points() {
            let winv = wt.data[p]
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NoConvergence("reducing transformation became singular".into()))?;
            let rp = winv * (&mt[p] * &wt.data[p] - &dwt.data[p]) - &lt;
            rmax = rmax.max(sup(&rp));
            r.data.push(rp);
        }
        if rmax <= opts.tol || iterations >= opts.max_iter {
            break;
        }
        if rmax < 0.5 * best {
            stalls = 0;
        } else {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        }
        best = best.min(rmax);
        iterations += 1;

        let rc = r.coefficients(modes);
        let zero = modes.zero_index();
        for c in &clusters {
            let blk = rc[zero].view((c.start, c.start), (c.len(), c.len())).clone_owned();
            let mut v = lt.view_mut((c.start, c.start), (c.len(), c.len()));
            v += blk;
        }
        let mut u = vec![DMatrix::<C64>::zeros(nn, nn); modes.len()];
        for (mode, uk) in u.iter_mut().enumerate() {
            let c = C64::new(0.0, kdot[mode]);
            for a in &clusters {
                for b in &clusters {
                    if mode == zero && a == b {
                        continue;
                    }
                    let la = lt.view((a.start, a.start), (a.len(), a.len())).clone_owned();
                    let lb = lt.view((b.start, b.start), (b.len(), b.len())).clone_owned();
                    let divisor = c - mean_diag(&la) + mean_diag(&lb);
                    if divisor.norm() < opts.divisor_floor {
                        return Err(Error::ReducibilityBreakdown {
                            wave: modes.wave(mode),
                            divisor: divisor.norm(),
                            floor: opts.divisor_floor,
                        });
                    }
                    let rab = rc[mode].view((a.start, b.start), (a.len(), b.len())).clone_owned();
                    let sol = solve_sylvester(c, &la, &lb, &rab).ok_or_else(|| Error::ReducibilityBreakdown {
                        wave: modes.wave(mode),
                        divisor: divisor.norm(),
                        floor: opts.divisor_floor,
                    })?;
                    uk.view_mut((a.start, b.start), (a.len(), b.len())).copy_from(&sol);
                }
            }
        }
        u[zero] += DMatrix::<C64>::identity(nn, nn);
        let ug = MatGrid::from_coefficients(&u, modes, size, nn);
        let prod = MatGrid {
            n_angles: na,
            size,
            nn,
            data: wt.data.iter().zip(&ug.data).map(|(a, b)| a * b).collect(),
        };
        wt_coef = prod.coefficients(modes);
    }

    // back to the real basis: W = I + S (W~ - I) S^-1, L = L0 + S (L~ - L~0) S^-1
    let wt = MatGrid::from_coefficients(&wt_coef, modes, size, nn);
    let mut wgrid = Grid::zeros(na, size, nn * nn);
    let mut min_singular = f64::INFINITY;
    for p in 0..wt.points() {
        let wr = (&s * &wt.data[p] * &s_inv).map(|c| c.re);
        min_singular = min_singular.min(wr.clone().singular_values().min());
        let slot = wgrid.value_mut(p);
        for (e, v) in wr.transpose().iter().enumerate() {
            slot[e] = *v;
        }
    }
    let w = FourierField::from_grid(&wgrid, modes, Parity::None);
    let l = &l0 + (&s * (&lt - &l_init) * &s_inv).map(|c| c.re);

    let defect = reduction_defect(&w, &l, &mgrid, &freq);
    if defect > opts.accept {
        return Err(Error::NoConvergence(format!(
            "Floquet reduction stalled with residual {defect:.3e} after {iterations} iterations"
        )));
    }
    let exponents = block_exponents(&split_blocks(&lt, &clusters));
    Ok(FloquetData {
        m,
        w,
        l,
        exponents,
        defect,
        min_singular,
        iterations,
    })
}

fn mean_diag(a: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    (0..n).map(|i| a[(i, i)]).sum::<C64>() / n as f64
}

fn split_blocks(lt: &DMatrix<C64>, clusters: &[std::ops::Range<usize>]) -> Vec<DMatrix<C64>> {
    clusters
        .iter()
        .map(|c| lt.view((c.start, c.start), (c.len(), c.len())).clone_owned())
        .collect()
}

fn l0_tilde_blocks(l0: &DMatrix<f64>, m: usize) -> Result<Vec<DMatrix<C64>>> {
    let nn = l0.nrows();
    let mut out = Vec::new();
    if m > 0 {
        out.push(DMatrix::<C64>::zeros(m, m));
    }
    let lam = l0.view((m, m), (nn - m, nn - m)).clone_owned();
    for z in eigenvalues(&lam) {
        out.push(DMatrix::from_element(1, 1, z));
    }
    Ok(out)
}

fn block_exponents(blocks: &[DMatrix<C64>]) -> Vec<C64> {
    let mut out = Vec::new();
    for b in blocks {
        if b.nrows() == 1 {
            out.push(b[(0, 0)]);
        } else {
            out.extend(complex_eigenvalues(b));
        }
    }
    out
}

/// Sup norm of `d_w W - M W + W L` on the grid of `mgrid`.
fn reduction_defect(w: &FourierField, l: &DMatrix<f64>, mgrid: &Grid, freq: &[f64]) -> f64 {
    let nn = l.nrows();
    let wg = w.to_grid(mgrid.size);
    let dwg = w.derivative(freq).to_grid(mgrid.size);
    let mut d: f64 = 0.0;
    for p in 0..mgrid.points() {
        let wm = DMatrix::from_row_slice(nn, nn, wg.value(p));
        let dw = DMatrix::from_row_slice(nn, nn, dwg.value(p));
        let mm = DMatrix::from_row_slice(nn, nn, mgrid.value(p));
        d = d.max((dw - mm * &wm + wm * l).amax());
    }
    d
}

/// Measured `alpha'` and `beta'` of a spectrum matched against a template.
#[derive(Clone, Debug, Serialize)]
pub struct MeasuredSpectrum {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Zero exponents (the `m` of smallest modulus).
    pub zeros: Vec<C64Pair>,
    /// `(template, computed)` for every nonzero exponent, template order.
    pub matched: Vec<(ExponentClass, C64Pair, C64Pair)>,
}

/// Serializable complex number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct C64Pair {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for C64Pair {
    fn from(z: C64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

/// Assigns computed exponents to the template by minimum-cost matching.
pub fn measure_exponents(exponents: &[C64], template: &SpectrumTemplate, m: usize) -> Result<MeasuredSpectrum> {
    let slots = template.slots();
    if exponents.len() != m + slots.len() {
        return Err(Error::PatternMismatch(format!(
            "expected {} exponents ({m} zeros and {} nonzero), got {}",
            m + slots.len(),
            slots.len(),
            exponents.len()
        )));
    }
    let mut order: Vec<usize> = (0..exponents.len()).collect();
    order.sort_by(|&a, &b| exponents[a].norm().total_cmp(&exponents[b].norm()));
    let zeros: Vec<C64Pair> = order[..m].iter().map(|&i| exponents[i].into()).collect();
    let rest: Vec<C64> = order[m..].iter().map(|&i| exponents[i]).collect();
    let n = rest.len();
    let cost = DMatrix::from_fn(n, n, |i, j| (slots[i].value - rest[j]).norm());
    let assign = hungarian(&cost);

    let mut alpha_acc = vec![(0.0, 0usize); template.alpha.len()];
    let mut beta_acc = vec![(0.0, 0usize); template.beta.len()];
    let mut matched = Vec::with_capacity(n);
    for (i, slot) in slots.iter().enumerate() {
        let z = rest[assign[i]];
        if let Some(k) = slot.alpha {
            alpha_acc[k].0 += slot.sign.0 * z.re;
            alpha_acc[k].1 += 1;
        }
        if let Some(l) = slot.beta {
            beta_acc[l].0 += slot.sign.1 * z.im;
            beta_acc[l].1 += 1;
        }
        matched.push((slot.class, slot.value.into(), z.into()));
    }
    Ok(MeasuredSpectrum {
        alpha: alpha_acc.iter().map(|(s, c)| s / *c as f64).collect(),
        beta: beta_acc.iter().map(|(s, c)| s / *c as f64).collect(),
        zeros,
        matched,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentEntry {
    pub class: ExponentClass,
    pub template: C64Pair,
    pub computed: C64Pair,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaEntry {
    pub index: usize,
    pub frozen: bool,
    pub alpha0: f64,
    pub alpha: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub zero_count: usize,
    pub zero_max: f64,
    pub entries: Vec<ExponentEntry>,
    pub beta: Vec<f64>,
    pub beta_deviation_max: f64,
    pub alphas: Vec<AlphaEntry>,
    pub frozen_deviation_max: f64,
    /// Distance between the spectrum and its negation.
    pub pairing_defect: f64,
}

fn class_of(z: C64) -> ExponentClass {
    let scale = z.norm().max(1.0);
    if z.norm() <= EXPONENT_TOL {
        ExponentClass::Zero
    } else if z.im.abs() <= CLASS_TOL * scale {
        ExponentClass::RealPair
    } else if z.re.abs() <= CLASS_TOL * scale {
        ExponentClass::ImaginaryPair
    } else {
        ExponentClass::Quadruple
    }
}

/// Checks an exponent list against the pattern `0 (m times), +-alpha',
/// +-i beta0, +-alpha' +- i beta0`.
pub fn verify_exponents(exponents: &[C64], template: &SpectrumTemplate, m: usize) -> Result<VerificationReport> {
    let measured = measure_exponents(exponents, template, m)?;
    let zero_count = exponents.iter().filter(|z| z.norm() <= EXPONENT_TOL).count();
    if zero_count != m {
        return Err(Error::PatternMismatch(format!("expected {m} zero exponents, found {zero_count}")));
    }
    let mut entries = Vec::new();
    for (class, tpl, got) in &measured.matched {
        let z = C64::new(got.re, got.im);
        if class_of(z) != *class {
            return Err(Error::PatternMismatch(format!(
                "exponent {:.6e}{:+.6e}i does not belong to class {class:?}",
                z.re, z.im
            )));
        }
        entries.push(ExponentEntry {
            class: *class,
            template: *tpl,
            computed: *got,
            deviation: (C64::new(tpl.re, tpl.im) - z).norm(),
        });
    }
    let beta_deviation_max = measured
        .beta
        .iter()
        .zip(&template.beta)
        .fold(0.0, |acc: f64, (b, b0)| acc.max((b - b0).abs()));
    // every imaginary part, not only the averaged pair value
    let beta_member_dev = measured
        .matched
        .iter()
        .filter(|(c, _, _)| matches!(c, ExponentClass::ImaginaryPair | ExponentClass::Quadruple))
        .fold(0.0, |acc: f64, (_, t, g)| acc.max((t.im - g.im).abs()));
    let beta_deviation_max = beta_deviation_max.max(beta_member_dev);
    let alphas: Vec<AlphaEntry> = measured
        .alpha
        .iter()
        .enumerate()
        .map(|(k, &a)| AlphaEntry {
            index: k,
            frozen: template.frozen.contains(&k),
            alpha0: template.alpha[k],
            alpha: a,
            deviation: (a - template.alpha[k]).abs(),
        })
        .collect();
    let frozen_deviation_max = alphas.iter().filter(|a| a.frozen).fold(0.0, |acc: f64, a| acc.max(a.deviation));
    let zero_max = measured.zeros.iter().fold(0.0, |acc: f64, z| acc.max(z.re.hypot(z.im)));
    let pairing = pairing_defect(exponents);
    Ok(VerificationReport {
        passed: beta_deviation_max <= EXPONENT_TOL && frozen_deviation_max <= EXPONENT_TOL && pairing <= EXPONENT_TOL,
        zero_count,
        zero_max,
        entries,
        beta: measured.beta,
        beta_deviation_max,
        alphas,
        frozen_deviation_max,
        pairing_defect: pairing,
    })
}

pub fn exponent_verify(fdata: &FloquetData, template: &SpectrumTemplate) -> Result<VerificationReport> {
    verify_exponents(&fdata.exponents, template, fdata.m)
}

#[derive(Clone, Debug, Serialize)]
pub struct FundamentalSolutionReport {
    pub time: f64,
    /// Max entrywise gap between the integrated fundamental matrix and
    /// `W(theta_T) exp(L T) W(theta_0)^{-1}`.
    pub max_deviation: f64,
    /// The same gap relative to the largest entry of the reduced solution.
    pub relative_deviation: f64,
}

/// Integrates `Phi' = M(theta_0 + w t) Phi` from the identity and compares
/// with the reduced solution at the given starting angles.
pub fn fundamental_solution_check(t: &TorusEmbedding, sys: &SystemFamily, fl: &FloquetData, starts: &[Vec<f64>], time: f64) -> Result<FundamentalSolutionReport> {
    let nn = fl.l.nrows();
    let freq = t.freq.clone();
    let expl = (&fl.l * time).exp();
    let mut max_dev = 0.0f64;
    let mut rel = 0.0f64;
    for theta0 in starts {
        let mut failure = None;
        let id: Vec<f64> = DMatrix::<f64>::identity(nn, nn).transpose().iter().copied().collect();
        let out = dopri5(
            |s, y, dy| {
                let theta: Vec<f64> = theta0.iter().zip(&freq).map(|(a, w)| a + w * s).collect();
                match normal_variational_at(t, sys, &theta) {
                    Ok(m) => {
                        let phi = DMatrix::from_row_slice(nn, nn, y);
                        let d = m * phi;
                        for i in 0..nn {
                            for j in 0..nn {
                                dy[i * nn + j] = d[(i, j)];
                            }
                        }
                    }
                    Err(e) => {
                        failure = Some(e);
                        dy.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            },
            0.0,
            &id,
            &[time],
            &OdeOptions::default(),
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let phi = DMatrix::from_row_slice(nn, nn, &out[0]);
        let theta_t: Vec<f64> = theta0.iter().zip(&freq).map(|(a, w)| a + w * time).collect();
        let w0 = fl.w_at(theta0);
        let w0_inv = w0
            .try_inverse()
            .ok_or_else(|| Error::NoConvergence("W is singular at the starting angle".into()))?;
        let psi = fl.w_at(&theta_t) * &expl * w0_inv;
        let dev = (&phi - &psi).amax();
        max_dev = max_dev.max(dev);
        rel = rel.max(dev / psi.amax());
    }
    Ok(FundamentalSolutionReport {
        time,
        max_deviation: max_dev,
        relative_deviation: rel,
    })
}
