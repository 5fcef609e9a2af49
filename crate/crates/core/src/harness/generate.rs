use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::{Components, Dims, Domain, SystemFamily};
use crate::trig::{Monomial, Trig, TrigPoly};

struct Gen {
    rng: ChaCha8Rng,
    dims: Dims,
    amp: f64,
    max_degree: u32,
}

impl Gen {
    fn n_vars(&self) -> usize {
        self.dims.n_vars()
    }

    fn z_var(&self, i: usize) -> usize {
        self.dims.m + i
    }

    fn coeff(&mut self) -> f64 {
        self.amp * self.rng.random_range(-1.0..1.0)
    }

    /// Exponents with total `(y, z)` degree in `[z_min, max]`, at least
    /// `z_min` of it in `z`.
    fn powers(&mut self, z_min: u32, degree: Option<u32>) -> Vec<u32> {
        let d = self.dims;
        let mut pw = vec![0u32; self.n_vars()];
        let top = self.max_degree.max(z_min);
        let deg = degree.unwrap_or_else(|| self.rng.random_range(z_min..=top));
        for _ in 0..z_min {
            let i = self.rng.random_range(0..2 * d.p);
            pw[self.z_var(i)] += 1;
        }
        for _ in z_min..deg {
            let i = self.rng.random_range(0..d.m + 2 * d.p);
            pw[i] += 1;
        }
        pw
    }

    /// Parity of the monomial under `y -> -y, z -> Kz`.
    fn sign(&self, pw: &[u32]) -> i32 {
        let d = self.dims;
        let odd: u32 = pw[..d.m].iter().sum::<u32>() + pw[self.z_var(d.p)..self.z_var(2 * d.p)].iter().sum::<u32>();
        if odd % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Wave vector with `|j| <= 1` and, if allowed, `|J| <= 1`.
    fn wave(&mut self, forcing: bool) -> Vec<i64> {
        let d = self.dims;
        let mut w = vec![0i64; d.torus_dim()];
        let mut pick = |rng: &mut ChaCha8Rng, lo: usize, len: usize| {
            let i = rng.random_range(0..=len);
            if i < len {
                w[lo + i] = if rng.random_bool(0.5) { 1 } else { -1 };
            }
        };
        pick(&mut self.rng, 0, d.n);
        if forcing {
            pick(&mut self.rng, d.n, d.forcing);
        }
        w
    }

    /// A monomial in output `comp` with total parity `sigma`.
    fn term(&mut self, out_dim: usize, comp: usize, sigma: i32, z_min: u32, forcing: bool, degree: Option<u32>) -> Monomial {
        let pw = self.powers(z_min, degree);
        let mut wave = self.wave(forcing);
        let trig = if sigma * self.sign(&pw) == 1 { Trig::Cos } else { Trig::Sin };
        if trig == Trig::Sin && wave.iter().all(|&k| k == 0) {
            wave[0] = 1;
        }
        let mut coeff = vec![0.0; out_dim];
        coeff[comp] = self.coeff();
        Monomial::new(trig, wave, pw, coeff)
    }

    /// Random terms for a perturbation map whose component `i` must have
    /// parity `sigma[i]`.
    fn perturbation(&mut self, sigma: &[i32], z_min: u32, forcing: bool, terms: usize) -> Result<TrigPoly> {
        let d = self.dims;
        let mut poly = TrigPoly::zero(sigma.len(), d.torus_dim(), self.n_vars());
        for (comp, &s) in sigma.iter().enumerate() {
            for t in 0..terms {
                // the first term of a forcing map is a pure angle function
                let degree = (forcing && z_min == 0 && t == 0).then_some(0);
                let term = self.term(sigma.len(), comp, s, z_min, forcing, degree);
                poly.push(term)?;
            }
        }
        Ok(poly)
    }

    fn plain(&self, out_dim: usize, comp: usize, value: f64, pw: Vec<u32>) -> Monomial {
        let mut coeff = vec![0.0; out_dim];
        coeff[comp] = value;
        Monomial::plain(pw, coeff, self.dims.torus_dim())
    }

    fn y_pair(&mut self) -> Vec<u32> {
        let mut pw = vec![0u32; self.n_vars()];
        for _ in 0..2 {
            pw[self.rng.random_range(0..self.dims.m)] += 1;
        }
        pw
    }
}

fn matrix_terms(gen: &Gen, mat: &DMatrix<f64>, pw: &[u32]) -> Option<Monomial> {
    if mat.iter().all(|v| *v == 0.0) {
        return None;
    }
    let coeff: Vec<f64> = (0..mat.nrows()).flat_map(|i| (0..mat.ncols()).map(move |j| (i, j))).map(|(i, j)| mat[(i, j)]).collect();
    Some(Monomial::plain(pw.to_vec(), coeff, gen.dims.torus_dim()))
}

/// Builds a reversible example system in the linear normal form around
/// `nu0 = 0`.
pub fn generate_example_system(cfg: &ExperimentConfig) -> Result<SystemFamily> {
    let t = &cfg.template;
    if t.p() != cfg.p {
        return Err(Error::TemplateInfeasible { got: t.p(), p: cfg.p });
    }
    cfg.validate()?;
    let d = cfg.dims();
    let (na, nv, p2) = (d.torus_dim(), d.n_vars(), 2 * d.p);
    let mut gen = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        dims: d,
        amp: cfg.generator.amplitude,
        max_degree: cfg.generator.max_degree,
    };
    let nu_var = |i: usize| d.m + p2 + i;
    let unit = |i: usize| {
        let mut pw = vec![0u32; nv];
        pw[i] = 1;
        pw
    };
    let mut comps = Components::zero(&d);

    // H = omega + nu_1..n + even terms in y
    for i in 0..d.n {
        comps.freq.push(gen.plain(d.n, i, cfg.frequencies.omega[i], vec![0; nv]))?;
        comps.freq.push(gen.plain(d.n, i, 1.0, unit(nu_var(i))))?;
        if d.m > 0 {
            let pw = gen.y_pair();
            let c = gen.coeff();
            comps.freq.push(gen.plain(d.n, i, c, pw))?;
        }
    }
    // Xi = nu_{n+1..n+m} + even terms in y
    for i in 0..d.m {
        comps.xi.push(gen.plain(d.m, i, 1.0, unit(nu_var(d.n + i))))?;
        let pw = gen.y_pair();
        let c = gen.coeff();
        comps.xi.push(gen.plain(d.m, i, c, pw))?;
    }

    // Lambda(0, nu): normal form, linear in (alpha, beta)
    let base = t.normal_form();
    comps.lambda.push(matrix_terms(&gen, &base, &vec![0; nv]).expect("nonzero normal form"))?;
    let shifted = |da: Option<usize>, db: Option<usize>| -> DMatrix<f64> {
        let mut tt = t.clone();
        if let Some(k) = da {
            tt.alpha[k] += 1.0;
        }
        if let Some(l) = db {
            tt.beta[l] += 1.0;
        }
        tt.normal_form() - &base
    };
    let mut next = d.n + d.m;
    let mut drivers: Vec<DMatrix<f64>> = (0..t.d2 + t.d3).map(|l| shifted(None, Some(l))).collect();
    drivers.extend(t.frozen.iter().map(|&k| shifted(Some(k), None)));
    let free: Vec<usize> = (0..t.alpha.len()).filter(|k| !t.frozen.contains(k)).collect();
    for &k in free.iter().take(d.s - cfg.required_parameters()) {
        drivers.push(shifted(Some(k), None));
    }
    for mat in &drivers {
        if let Some(term) = matrix_terms(&gen, mat, &unit(nu_var(next))) {
            comps.lambda.push(term)?;
        }
        next += 1;
    }
    // y-dependence: odd terms commuting with K, even terms anti-commuting
    for a in 0..d.m {
        let mut odd = DMatrix::zeros(p2, p2);
        let mut even = DMatrix::zeros(p2, p2);
        for i in 0..p2 {
            for j in 0..p2 {
                let same = (i < d.p) == (j < d.p);
                let v = 0.5 * gen.coeff();
                if same {
                    odd[(i, j)] = v;
                } else {
                    even[(i, j)] = v;
                }
            }
        }
        if let Some(term) = matrix_terms(&gen, &odd, &unit(a)) {
            comps.lambda.push(term)?;
        }
        let mut pw = unit(a);
        pw[a] = 2;
        if let Some(term) = matrix_terms(&gen, &even, &pw) {
            comps.lambda.push(term)?;
        }
    }

    let terms = cfg.generator.terms;
    let even_n = vec![1; d.n];
    let even_m = vec![1; d.m];
    let h_sigma: Vec<i32> = (0..p2).map(|i| if i < d.p { -1 } else { 1 }).collect();
    comps.f_sharp = gen.perturbation(&even_n, 1, false, terms)?;
    comps.g_sharp = gen.perturbation(&even_m, 2, false, terms)?;
    comps.h_sharp = gen.perturbation(&h_sigma, 2, false, terms)?;
    comps.f = gen.perturbation(&even_n, 0, true, terms)?;
    comps.g = gen.perturbation(&even_m, 0, true, terms)?;
    comps.h = gen.perturbation(&h_sigma, 0, true, terms)?;
    debug_assert_eq!(comps.f.n_angles(), na);

    SystemFamily::new(d, cfg.frequencies.forcing.clone(), Domain::unit(&d), comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::SpectrumTemplate;
    use crate::harness::ExperimentConfig;
    use crate::model::checks::{order_condition_check, reversibility_residual, SamplePlan, DEFAULT_SAMPLES};

    pub(crate) fn reference_config(kappa: usize) -> ExperimentConfig {
        let text = format!(
            r#"
            n = 1
            m = 1
            p = 2
            N = 1
            s = {}
            seed = 11
            [template]
            d1 = 1
            d2 = 1
            d3 = 0
            alpha = [0.7]
            beta = [1.4142135623730951]
            frozen = {}
            [frequencies]
            omega = [1.0]
            Omega = [1.618033988749895]
            tau = 2.0
            "#,
            3 + kappa,
            if kappa == 1 { "[0]" } else { "[]" }
        );
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn generated_system_is_reversible() {
        for kappa in [0, 1] {
            let cfg = reference_config(kappa);
            let sys = generate_example_system(&cfg).unwrap();
            let inv = cfg.involution();
            let rep = reversibility_residual(&sys, &inv, &SamplePlan::Random { count: DEFAULT_SAMPLES, seed: 3 }).unwrap();
            assert!(rep.identities.iter().all(|e| e.defect <= 1e-12), "{rep:?}");
            assert!(order_condition_check(&sys, &inv).passed);
        }
    }

    #[test]
    fn normal_form_is_linear_in_nu() {
        let cfg = reference_config(1);
        let sys = generate_example_system(&cfg).unwrap();
        let lam = sys.lambda_at(&[0.0], &[0.0, 0.0, 0.1, 0.2]);
        let t = SpectrumTemplate::new(1, 1, 0, vec![0.9], vec![1.4142135623730951 + 0.1], vec![0]).unwrap();
        assert!((lam - t.normal_form()).amax() < 1e-15);
    }

    #[test]
    fn same_seed_same_system() {
        let cfg = reference_config(0);
        assert_eq!(generate_example_system(&cfg).unwrap(), generate_example_system(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(generate_example_system(&cfg).unwrap(), generate_example_system(&other).unwrap());
    }
}
