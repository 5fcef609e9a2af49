//! Newton-Galerkin solver for the invariance equation.
//!
//! Unknowns are the real Fourier coefficients of `(A, C, D, B)` on the box
//! `|k_a| <= M`, the shift `Theta` and the part of the parameter correction
//! that controls `H(0, nu)` and `Xi(0, nu)`. Parameters are written as
//! `nu = nu0 + J^+ mu` with `J` the Jacobian of
//! `nu -> (H(0,nu), Xi(0,nu), beta(nu), alpha_frozen(nu))` at `nu0`.
//! The remaining components of `mu` are adjusted in an outer loop until the
//! Floquet exponents of the torus carry `beta0` and the frozen `alpha0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{residual_grid, solver_grid, symmetry_project, theta_diagnostic, TorusEmbedding};
use crate::diophantine::FrequencyData;
use crate::error::{Error, Result};
use crate::floquet::{anticommuting_spectrum_classify, measure_exponents, reduce_variational_with, FloquetOptions, SpectrumTemplate};
use crate::fourier::{FourierField, Grid, ModeSet, Parity, C64};
use crate::linalg::{eigenvalues, solve_dense};
use crate::model::{InvolutionSpec, SystemFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryMode {
    /// Fields are projected onto their parity classes after every step and `Theta = 0`.
    Enforced,
    /// `Theta` and all coefficients are free unknowns.
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Fourier modes per angle.
    pub modes: usize,
    pub tol: f64,
    pub divisor_floor: f64,
    pub max_iter: usize,
    pub mode: SymmetryMode,
    /// Indices into `alpha` whose values are held at `alpha0`.
    pub frozen: Vec<usize>,
    /// Tolerance on the Floquet constraints.
    pub spectral_tol: f64,
    pub max_outer: usize,
    /// Smallest admissible singular value of the parameter map Jacobian.
    pub submersion_floor: f64,
    /// Largest Floquet reduction residual accepted.
    pub floquet_accept: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            modes: 16,
            tol: 1e-11,
            divisor_floor: 1e-10,
            max_iter: 20,
            mode: SymmetryMode::Free,
            frozen: Vec::new(),
            spectral_tol: 1e-11,
            max_outer: 12,
            submersion_floor: 1e-8,
            floquet_accept: FloquetOptions::default().accept,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub iteration: usize,
    pub residual: f64,
    pub theta_norm: f64,
    pub b_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub inner_iterations: usize,
    pub spectral_defect: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConvergenceLog {
    pub iterations: Vec<IterationRecord>,
    pub outer: Vec<OuterRecord>,
    pub converged: bool,
    /// Residual evaluations in the longest inner solve.
    pub newton_iterations: usize,
    pub residual: f64,
    /// Residual on a grid twice as fine as the solver grid.
    pub fine_residual: f64,
    /// Largest `r_{k+1} / r_k^2` once `r_k < 1e-3`.
    pub quadratic_constant: Option<f64>,
    pub spectral_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubmersionReport {
    pub rows: usize,
    pub rank: usize,
    pub sigma_min: f64,
    pub singular_values: Vec<f64>,
    /// Row-major `rows x s`.
    pub jacobian: Vec<f64>,
    pub passed: bool,
}

/// The map `nu -> (H(0,nu), Xi(0,nu), beta(nu), alpha_frozen(nu))`.
fn parameter_map(sys: &SystemFamily, template: &SpectrumTemplate, nu: &[f64]) -> Result<Vec<f64>> {
    let d = sys.dims();
    let y0 = vec![0.0; d.m];
    let mut out = sys.freq_at(&y0, nu);
    out.extend(sys.xi_at(&y0, nu));
    let lam = sys.lambda_at(&y0, nu);
    let ev: Vec<C64> = eigenvalues(&lam);
    let measured = measure_exponents(&ev, template, 0)?;
    out.extend(measured.beta);
    out.extend(template.frozen.iter().map(|&k| measured.alpha[k]));
    Ok(out)
}

fn map_jacobian(sys: &SystemFamily, template: &SpectrumTemplate, nu0: &[f64]) -> Result<DMatrix<f64>> {
    let h = 1e-6;
    let base = parameter_map(sys, template, nu0)?;
    let mut jac = DMatrix::zeros(base.len(), nu0.len());
    for b in 0..nu0.len() {
        let mut np = nu0.to_vec();
        let mut nm = nu0.to_vec();
        np[b] += h;
        nm[b] -= h;
        let fp = parameter_map(sys, template, &np)?;
        let fm = parameter_map(sys, template, &nm)?;
        for r in 0..base.len() {
            jac[(r, b)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn classify_at(sys: &SystemFamily, inv: &InvolutionSpec, nu0: &[f64], frozen: &[usize]) -> Result<SpectrumTemplate> {
    let lam = sys.lambda_at(&vec![0.0; sys.dims().m], nu0);
    let mut template = anticommuting_spectrum_classify(&lam, &inv.k)?;
    template.frozen = frozen.to_vec();
    template.validate()?;
    Ok(template)
}

/// Rank and conditioning of the parameter map at `nu0`.
pub fn submersion_check(sys: &SystemFamily, inv: &InvolutionSpec, nu0: &[f64], frozen: &[usize]) -> Result<SubmersionReport> {
    let template = classify_at(sys, inv, nu0, frozen)?;
    let jac = map_jacobian(sys, &template, nu0)?;
    Ok(submersion_report(&jac, 1e-8))
}

fn submersion_report(jac: &DMatrix<f64>, floor: f64) -> SubmersionReport {
    let rows = jac.nrows();
    let mut sv: Vec<f64> = if jac.is_empty() { Vec::new() } else { jac.clone().singular_values().iter().copied().collect() };
    sv.sort_by(|a, b| b.total_cmp(a));
    let rank = sv.iter().filter(|&&s| s >= floor).count();
    let sigma_min = if rows > jac.ncols() { 0.0 } else { sv.get(rows.wrapping_sub(1)).copied().unwrap_or(f64::INFINITY) };
    SubmersionReport {
        rows,
        rank,
        sigma_min,
        singular_values: sv,
        jacobian: jac.transpose().iter().copied().collect(),
        passed: rank == rows && sigma_min >= floor,
    }
}

/// A solver bound to one system, frequency vector and base parameter.
pub struct TorusProblem<'a> {
    sys: &'a SystemFamily,
    inv: &'a InvolutionSpec,
    freq: Vec<f64>,
    nu0: Vec<f64>,
    template: SpectrumTemplate,
    jac: DMatrix<f64>,
    pinv: DMatrix<f64>,
    opts: SolverOptions,
}

/// Solves for the torus at `eps` starting from the zero embedding.
pub fn newton_solve(
    sys: &SystemFamily,
    inv: &InvolutionSpec,
    fd: &FrequencyData,
    nu0: &[f64],
    eps: f64,
    opts: &SolverOptions,
) -> Result<(TorusEmbedding, ConvergenceLog)> {
    TorusProblem::new(sys, inv, fd, nu0, opts.clone())?.solve(eps, None)
}

impl<'a> TorusProblem<'a> {
    pub fn new(sys: &'a SystemFamily, inv: &'a InvolutionSpec, fd: &FrequencyData, nu0: &[f64], opts: SolverOptions) -> Result<Self> {
        let d = *sys.dims();
        if fd.omega.len() != d.n || fd.forcing.len() != d.forcing || nu0.len() != d.s || inv.dims != d {
            return Err(Error::DimensionMismatch("frequency data, nu0 or involution do not match the system".into()));
        }
        if fd.forcing.iter().zip(sys.forcing_freq()).any(|(a, b)| (a - b).abs() > 1e-14) {
            return Err(Error::DimensionMismatch("Omega of the frequency data differs from the system's".into()));
        }
        let template = classify_at(sys, inv, nu0, &opts.frozen)?;
        let jac = map_jacobian(sys, &template, nu0)?;
        let rep = submersion_report(&jac, opts.submersion_floor);
        if !rep.passed {
            return Err(Error::RankDeficient {
                sigma_min: rep.sigma_min,
                rank: rep.rank,
                required: rep.rows,
            });
        }
        let pinv = jac
            .clone()
            .pseudo_inverse(1e-14)
            .map_err(|e| Error::NoConvergence(format!("pseudo-inverse failed: {e}")))?;
        Ok(Self {
            sys,
            inv,
            freq: fd.torus_freq(),
            nu0: nu0.to_vec(),
            template,
            jac,
            pinv,
            opts,
        })
    }

    pub fn template(&self) -> &SpectrumTemplate {
        &self.template
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    fn n_inner(&self) -> usize {
        let d = self.sys.dims();
        d.n + d.m
    }

    /// `J (nu - nu0)`.
    fn mu_of(&self, nu: &[f64]) -> Vec<f64> {
        let dn = DVector::from_iterator(nu.len(), nu.iter().zip(&self.nu0).map(|(a, b)| a - b));
        (&self.jac * dn).as_slice().to_vec()
    }

    fn nu_of(&self, mu: &[f64]) -> Vec<f64> {
        let v = &self.pinv * DVector::from_column_slice(mu);
        self.nu0.iter().zip(v.iter()).map(|(a, b)| a + b).collect()
    }

    /// Solves at `eps`, warm-starting from `initial` when given.
    pub fn solve(&self, eps: f64, initial: Option<&TorusEmbedding>) -> Result<(TorusEmbedding, ConvergenceLog)> {
        let d = *self.sys.dims();
        let mut t = match initial {
            Some(t0) => {
                let mut t = t0.with_modes(self.opts.modes);
                if t.dims != d {
                    return Err(Error::DimensionMismatch("initial embedding does not match the system".into()));
                }
                t.freq = self.freq.clone();
                t
            }
            None => TorusEmbedding::zero(d, &self.inv.k, self.opts.modes, self.freq.clone(), self.nu0.clone(), eps),
        };
        t.eps = eps;
        let mut log = ConvergenceLog::default();
        let mut mu = self.mu_of(&t.nu);
        t.nu = self.nu_of(&mu);
        let ni = self.n_inner();
        let n_out = mu.len() - ni;

        self.inner(&mut t, &mut mu, 0, &mut log)?;
        if eps != 0.0 && n_out > 0 {
            self.spectral_closure(&mut t, &mut mu, &mut log)?;
        }
        log.converged = true;
        log.fine_residual = residual_grid(&t, self.sys, 2 * solver_grid(self.opts.modes))?.sup_norm();
        Ok((t, log))
    }

    fn spectral_defect(&self, t: &TorusEmbedding) -> Result<Vec<f64>> {
        let opts = FloquetOptions {
            accept: self.opts.floquet_accept,
            divisor_floor: self.opts.divisor_floor,
            ..FloquetOptions::default()
        };
        let fl = reduce_variational_with(t, self.sys, &opts)?;
        let ms = measure_exponents(&fl.exponents, &self.template, fl.m)?;
        let mut f: Vec<f64> = ms.beta.iter().zip(&self.template.beta).map(|(b, b0)| b - b0).collect();
        f.extend(self.template.frozen.iter().map(|&k| ms.alpha[k] - self.template.alpha[k]));
        Ok(f)
    }

    /// Broyden iteration on the spectral part of `mu`.
    fn spectral_closure(&self, t: &mut TorusEmbedding, mu: &mut [f64], log: &mut ConvergenceLog) -> Result<()> {
        let ni = self.n_inner();
        let n_out = mu.len() - ni;
        let mut b = DMatrix::<f64>::identity(n_out, n_out);
        let mut f = DVector::from_vec(self.spectral_defect(t)?);
        let norm = |v: &DVector<f64>| v.amax();
        log.outer.push(OuterRecord {
            outer: 0,
            inner_iterations: log.newton_iterations,
            spectral_defect: norm(&f),
        });
        for outer in 1..=self.opts.max_outer {
            if norm(&f) <= self.opts.spectral_tol {
                log.spectral_defect = norm(&f);
                return Ok(());
            }
            let step = b
                .clone()
                .lu()
                .solve(&(-&f))
                .ok_or_else(|| Error::NoConvergence("singular spectral update".into()))?;
            for (m, s) in mu[ni..].iter_mut().zip(step.iter()) {
                *m += s;
            }
            let inner = self.inner(t, mu, outer, log)?;
            let f_new = DVector::from_vec(self.spectral_defect(t)?);
            let df = &f_new - &f;
            let denom = step.dot(&step);
            if denom > 0.0 {
                b += (df - &b * &step) * step.transpose() / denom;
            }
            f = f_new;
            log.outer.push(OuterRecord {
                outer,
                inner_iterations: inner,
                spectral_defect: norm(&f),
            });
        }
        log.spectral_defect = norm(&f);
        if norm(&f) <= self.opts.spectral_tol {
            return Ok(());
        }
        Err(Error::NoConvergence(format!(
            "Floquet constraints not met after {} outer iterations (defect {:.3e})",
            self.opts.max_outer,
            norm(&f)
        )))
    }

    fn divisor_check(&self, nu: &[f64], ms: ModeSet) -> Result<()> {
        let floor = self.opts.divisor_floor;
        let d = self.sys.dims();
        let lam = self.sys.lambda_at(&vec![0.0; d.m], nu);
        let ev: Vec<C64> = eigenvalues(&lam);
        for idx in 0..ms.len() {
            let k = ms.wave(idx);
            let w: f64 = k.iter().zip(&self.freq).map(|(&k, &f)| k as f64 * f).sum();
            if idx > ms.zero_index() && w.abs() < floor {
                return Err(Error::SmallDivisorBreakdown {
                    wave: k,
                    divisor: w.abs(),
                    floor,
                });
            }
            for z in &ev {
                let div = (C64::new(0.0, w) - z).norm();
                if div < floor {
                    return Err(Error::SmallDivisorBreakdown { wave: k, divisor: div, floor });
                }
            }
        }
        Ok(())
    }

    /// Newton iteration at fixed spectral parameters. Returns the number of
    /// residual evaluations.
    fn inner(&self, t: &mut TorusEmbedding, mu: &mut [f64], outer: usize, log: &mut ConvergenceLog) -> Result<usize> {
        let ms = t.modes();
        let size = solver_grid(ms.modes);
        let mut history: Vec<f64> = Vec::new();
        let mut stalls = 0;
        let mut checked = false;
        loop {
            t.nu = self.nu_of(mu);
            let grid = residual_grid(t, self.sys, size)?;
            let r = grid.sup_norm();
            let diag = theta_diagnostic(t);
            log.iterations.push(IterationRecord {
                outer,
                iteration: history.len() + 1,
                residual: r,
                theta_norm: diag.theta_norm,
                b_norm: diag.b_norm,
            });
            if let Some(&prev) = history.last() {
                if r > 0.5 * prev {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
            }
            history.push(r);
            log.residual = r;
            log.newton_iterations = log.newton_iterations.max(history.len());
            if r <= self.opts.tol {
                if let Some(c) = quadratic_constant(&history) {
                    log.quadratic_constant = Some(log.quadratic_constant.map_or(c, |q: f64| q.max(c)));
                }
                return Ok(history.len());
            }
            if !r.is_finite() || stalls >= 3 || history.len() > self.opts.max_iter {
                return Err(Error::NoConvergence(format!(
                    "residual {r:.3e} after {} iterations (tolerance {:.1e})",
                    history.len(),
                    self.opts.tol
                )));
            }
            if !checked {
                self.divisor_check(&t.nu, ms)?;
                checked = true;
            }
            self.newton_step(t, mu, &grid)?;
            if self.opts.mode == SymmetryMode::Enforced {
                let (p, _) = symmetry_project(t);
                *t = p;
                t.theta.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    fn newton_step(&self, t: &mut TorusEmbedding, mu: &mut [f64], resid: &Grid) -> Result<()> {
        let d = *self.sys.dims();
        let (pd, na) = (d.phase_dim(), d.torus_dim());
        let ms = t.modes();
        let big = ModeSet::new(na, 2 * ms.modes);
        let size = resid.size;
        let nl = ms.len();
        let zero = ms.zero_index();
        let ni = self.n_inner();
        let n_unk = pd * nl + d.forcing + ni;

        // real slots: 0 -> Re c_0, then (Re, Im) of each half-space mode
        let slots: Vec<usize> = std::iter::once(zero).chain(ms.half()).collect();
        let waves: Vec<Vec<i64>> = slots.iter().map(|&i| ms.wave(i)).collect();
        let kdot: Vec<f64> = waves.iter().map(|k| k.iter().zip(&self.freq).map(|(&k, &f)| k as f64 * f).sum()).collect();

        // derivative of the field at every grid point
        let emb = super::embedding_grid(t, size);
        let mut dv = Grid::zeros(na, size, pd * pd);
        let mut dnu = Grid::zeros(na, size, pd * ni);
        let pin = self.pinv.columns(0, ni).clone_owned();
        for pt in 0..emb.points() {
            let jet = self.sys.jacobian(emb.value(pt), &t.nu, t.eps, &t.theta);
            let slot = dv.value_mut(pt);
            for i in 0..pd {
                for j in 0..pd {
                    slot[i * pd + j] = jet.d_state[(i, j)];
                }
            }
            let cols = &jet.d_nu * &pin;
            let slot = dnu.value_mut(pt);
            for i in 0..pd {
                for a in 0..ni {
                    slot[i * ni + a] = cols[(i, a)];
                }
            }
        }
        let mhat = FourierField::from_grid(&dv, big, Parity::None);
        let nuhat = FourierField::from_grid(&dnu, ms, Parity::None);
        let rhat = FourierField::from_grid(resid, ms, Parity::None);

        let mut a = vec![0.0; n_unk * n_unk];
        let mut rhs = vec![0.0; n_unk];
        let row_of = |comp: usize, s: usize, imag: bool| comp * nl + if s == 0 { 0 } else { 2 * s - 1 + imag as usize };

        // wave index in the doubled box for l - k and l + k
        let nslots = slots.len();
        let mut diff = vec![0usize; nslots * nslots];
        let mut sum = vec![0usize; nslots * nslots];
        for (ls, l) in waves.iter().enumerate() {
            for (ks, k) in waves.iter().enumerate() {
                let dw: Vec<i64> = l.iter().zip(k).map(|(a, b)| a - b).collect();
                let sw: Vec<i64> = l.iter().zip(k).map(|(a, b)| a + b).collect();
                diff[ls * nslots + ks] = big.index(&dw).expect("difference inside doubled box");
                sum[ls * nslots + ks] = big.index(&sw).expect("sum inside doubled box");
            }
        }

        let iu = C64::new(0.0, 1.0);
        for i in 0..pd {
            for (ls, &lw) in kdot.iter().enumerate() {
                for j in 0..pd {
                    let e = i * pd + j;
                    for ks in 0..nslots {
                        let md = mhat.coeff(diff[ls * nslots + ks], e);
                        if ks == 0 {
                            let z = -md;
                            let col = row_of(j, 0, false);
                            a[row_of(i, ls, false) * n_unk + col] = z.re;
                            if ls > 0 {
                                a[row_of(i, ls, true) * n_unk + col] = z.im;
                            }
                            continue;
                        }
                        let msum = mhat.coeff(sum[ls * nslots + ks], e);
                        let diag = i == j && ls == ks;
                        let mut zr = -md - msum;
                        let mut zi = -iu * md + iu * msum;
                        if diag {
                            zr += C64::new(0.0, lw);
                            zi += C64::new(-lw, 0.0);
                        }
                        let (cr, ci) = (row_of(j, ks, false), row_of(j, ks, true));
                        let rr = row_of(i, ls, false) * n_unk;
                        a[rr + cr] = zr.re;
                        a[rr + ci] = zi.re;
                        if ls > 0 {
                            let ri = row_of(i, ls, true) * n_unk;
                            a[ri + cr] = zr.im;
                            a[ri + ci] = zi.im;
                        }
                    }
                }
                // residual right-hand side
                let r = rhat.coeff(slots[ls], i);
                rhs[row_of(i, ls, false)] = -r.re;
                if ls > 0 {
                    rhs[row_of(i, ls, true)] = -r.im;
                }
                // parameter columns
                for p in 0..ni {
                    let z = -nuhat.coeff(slots[ls], i * ni + p);
                    let col = pd * nl + d.forcing + p;
                    a[row_of(i, ls, false) * n_unk + col] = z.re;
                    if ls > 0 {
                        a[row_of(i, ls, true) * n_unk + col] = z.im;
                    }
                }
            }
        }
        // Theta enters the X rows' mean with a minus sign
        let x0 = d.n + d.m + 2 * d.p;
        for q in 0..d.forcing {
            a[row_of(x0 + q, 0, false) * n_unk + pd * nl + q] = -1.0;
        }
        // phase normalization: mean A = mean C = mean B = 0
        let pinned: Vec<usize> = (0..d.n + d.m).chain(x0..x0 + d.forcing).collect();
        for (r, &comp) in pinned.iter().enumerate() {
            let row = pd * nl + r;
            a[row * n_unk + row_of(comp, 0, false)] = 1.0;
            let (fi, c) = t.locate(comp);
            rhs[row] = -t.fields()[fi].coeff(zero, c).re;
        }

        let delta = solve_dense(&a, n_unk, &rhs)?;

        for comp in 0..pd {
            let (fi, c) = t.locate(comp);
            let f = &mut t.fields_mut()[fi];
            let dim = f.dim();
            for (s, &idx) in slots.iter().enumerate() {
                let dz = if s == 0 {
                    C64::new(delta[row_of(comp, 0, false)], 0.0)
                } else {
                    C64::new(delta[row_of(comp, s, false)], delta[row_of(comp, s, true)])
                };
                let neg = ms.neg(idx);
                f.coeffs_mut()[idx * dim + c] += dz;
                if neg != idx {
                    f.coeffs_mut()[neg * dim + c] += dz.conj();
                }
            }
        }
        for q in 0..d.forcing {
            t.theta[q] += delta[pd * nl + q];
        }
        for p in 0..ni {
            mu[p] += delta[pd * nl + d.forcing + p];
        }
        t.nu = self.nu_of(mu);
        Ok(())
    }
}

fn quadratic_constant(history: &[f64]) -> Option<f64> {
    history
        .windows(2)
        .filter(|w| w[0] < 1e-3 && w[0] > 0.0)
        .map(|w| w[1] / (w[0] * w[0]))
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))))
}
