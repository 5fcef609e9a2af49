//! Finite trigonometric polynomials in the angles with polynomial
//! coefficients in the remaining variables.
//!
//! A [`TrigPoly`] is a vector-valued sum of monomials
//!
//! ```text
//!   c * trig(<k, angles>) * v_1^{e_1} * ... * v_r^{e_r}
//! ```
//!
//! with `trig` either `cos` or `sin`, an integer wave vector `k` and a
//! non-negative exponent per polynomial variable. Values and first
//! derivatives are exact (no finite differences anywhere).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Cos,
    Sin,
}

impl Trig {
    /// Parity of the trigonometric factor under `angles -> -angles`.
    pub fn parity(self) -> i32 {
        match self {
            Trig::Cos => 1,
            Trig::Sin => -1,
        }
    }
}

/// One vector-valued monomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub trig: Trig,
    pub wave: Vec<i64>,
    pub powers: Vec<u32>,
    pub coeff: Vec<f64>,
}

impl Monomial {
    pub fn new(trig: Trig, wave: Vec<i64>, powers: Vec<u32>, coeff: Vec<f64>) -> Self {
        Self {
            trig,
            wave,
            powers,
            coeff,
        }
    }

    /// Constant-in-angles monomial (`cos(0) = 1`).
    pub fn plain(powers: Vec<u32>, coeff: Vec<f64>, n_angles: usize) -> Self {
        Self::new(Trig::Cos, vec![0; n_angles], powers, coeff)
    }
}

/// Vector-valued trigonometric polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    out_dim: usize,
    n_angles: usize,
    n_vars: usize,
    terms: Vec<Monomial>,
}

/// Value and first derivatives of a [`TrigPoly`] at one point.
///
/// Derivative matrices are stored row-major: `d_angles[i * n_angles + a]` is
/// the derivative of output `i` with respect to angle `a`.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: Vec<f64>,
    pub d_angles: Vec<f64>,
    pub d_vars: Vec<f64>,
}

impl TrigPoly {
    pub fn zero(out_dim: usize, n_angles: usize, n_vars: usize) -> Self {
        Self {
            out_dim,
            n_angles,
            n_vars,
            terms: Vec::new(),
        }
    }

    pub fn new(out_dim: usize, n_angles: usize, n_vars: usize, terms: Vec<Monomial>) -> Result<Self> {
        let mut poly = Self::zero(out_dim, n_angles, n_vars);
        for term in terms {
            poly.push(term)?;
        }
        Ok(poly)
    }

    pub fn push(&mut self, term: Monomial) -> Result<()> {
        if term.wave.len() != self.n_angles {
            return Err(Error::DimensionMismatch(format!(
                "wave vector has length {}, expected {}",
                term.wave.len(),
                self.n_angles
            )));
        }
        if term.powers.len() != self.n_vars {
            return Err(Error::DimensionMismatch(format!(
                "exponent multi-index has length {}, expected {}",
                term.powers.len(),
                self.n_vars
            )));
        }
        if term.coeff.len() != self.out_dim {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector has length {}, expected {}",
                term.coeff.len(),
                self.out_dim
            )));
        }
        self.terms.push(term);
        Ok(())
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when some term with a nonzero coefficient has a nonzero exponent
    /// on any variable in `range`.
    pub fn depends_on_vars(&self, range: std::ops::Range<usize>) -> bool {
        self.terms.iter().any(|t| {
            t.coeff.iter().any(|&c| c != 0.0) && t.powers[range.clone()].iter().any(|&e| e > 0)
        })
    }

    /// True when some term with a nonzero coefficient depends on an angle in `range`.
    pub fn depends_on_angles(&self, range: std::ops::Range<usize>) -> bool {
        self.terms.iter().any(|t| {
            t.coeff.iter().any(|&c| c != 0.0) && t.wave[range.clone()].iter().any(|&k| k != 0)
        })
    }

    pub fn eval(&self, angles: &[f64], vars: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.eval_into(angles, vars, 1.0, &mut out);
        out
    }

    /// Adds `weight * self(angles, vars)` to `out`.
    pub fn eval_into(&self, angles: &[f64], vars: &[f64], weight: f64, out: &mut [f64]) {
        debug_assert_eq!(angles.len(), self.n_angles);
        debug_assert_eq!(vars.len(), self.n_vars);
        for term in &self.terms {
            let phase = phase_of(&term.wave, angles);
            let t = match term.trig {
                Trig::Cos => phase.cos(),
                Trig::Sin => phase.sin(),
            };
            let mono = monomial_value(&term.powers, vars);
            let s = weight * t * mono;
            if s == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(&term.coeff) {
                *o += s * c;
            }
        }
    }

    pub fn jet(&self, angles: &[f64], vars: &[f64]) -> Jet {
        let mut jet = Jet {
            value: vec![0.0; self.out_dim],
            d_angles: vec![0.0; self.out_dim * self.n_angles],
            d_vars: vec![0.0; self.out_dim * self.n_vars],
        };
        self.jet_into(angles, vars, 1.0, &mut jet);
        jet
    }

    /// Adds `weight` times the value and derivatives to `jet`.
    pub fn jet_into(&self, angles: &[f64], vars: &[f64], weight: f64, jet: &mut Jet) {
        let na = self.n_angles;
        let nv = self.n_vars;
        let mut grad = vec![0.0; nv];
        for term in &self.terms {
            let phase = phase_of(&term.wave, angles);
            let (s, c) = phase.sin_cos();
            // trig value and its derivative with respect to the phase
            let (t, dt) = match term.trig {
                Trig::Cos => (c, -s),
                Trig::Sin => (s, c),
            };
            let mono = monomial_value(&term.powers, vars);
            monomial_grad(&term.powers, vars, &mut grad);
            for (i, coeff) in term.coeff.iter().enumerate() {
                if *coeff == 0.0 {
                    continue;
                }
                let w = weight * coeff;
                jet.value[i] += w * t * mono;
                if dt != 0.0 && mono != 0.0 {
                    for (a, &k) in term.wave.iter().enumerate() {
                        if k != 0 {
                            jet.d_angles[i * na + a] += w * dt * mono * k as f64;
                        }
                    }
                }
                if t != 0.0 {
                    for (v, g) in grad.iter().enumerate() {
                        if *g != 0.0 {
                            jet.d_vars[i * nv + v] += w * t * g;
                        }
                    }
                }
            }
        }
    }
}

fn phase_of(wave: &[i64], angles: &[f64]) -> f64 {
    wave.iter()
        .zip(angles)
        .filter(|(k, _)| **k != 0)
        .map(|(k, a)| *k as f64 * a)
        .sum()
}

fn monomial_value(powers: &[u32], vars: &[f64]) -> f64 {
    powers
        .iter()
        .zip(vars)
        .filter(|(e, _)| **e > 0)
        .map(|(e, v)| v.powi(*e as i32))
        .product()
}

fn monomial_grad(powers: &[u32], vars: &[f64], grad: &mut [f64]) {
    for (v, g) in grad.iter_mut().enumerate() {
        let e = powers[v];
        if e == 0 {
            *g = 0.0;
            continue;
        }
        let mut prod = e as f64 * vars[v].powi(e as i32 - 1);
        for (u, (&eu, &xu)) in powers.iter().zip(vars).enumerate() {
            if u != v && eu > 0 {
                prod *= xu.powi(eu as i32);
            }
        }
        *g = prod;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrigPoly {
        // [cos(x0 - 2 x1) * v0^2 v1, sin(x1) * v1]
        TrigPoly::new(
            2,
            2,
            2,
            vec![
                Monomial::new(Trig::Cos, vec![1, -2], vec![2, 1], vec![1.5, 0.0]),
                Monomial::new(Trig::Sin, vec![0, 1], vec![0, 1], vec![0.0, -0.5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn evaluates_terms() {
        let p = sample();
        let a = [0.3, -1.1];
        let v = [0.7, 2.0];
        let out = p.eval(&a, &v);
        let expect0 = 1.5 * (0.3f64 + 2.2).cos() * 0.49 * 2.0;
        let expect1 = -0.5 * (-1.1f64).sin() * 2.0;
        assert!((out[0] - expect0).abs() < 1e-15);
        assert!((out[1] - expect1).abs() < 1e-15);
    }

    #[test]
    fn jet_matches_central_differences() {
        let p = sample();
        let a = [0.3, -1.1];
        let v = [0.7, 2.0];
        let jet = p.jet(&a, &v);
        let h = 1e-6;
        for i in 0..2 {
            let mut ap = a;
            let mut am = a;
            ap[i] += h;
            am[i] -= h;
            let fp = p.eval(&ap, &v);
            let fm = p.eval(&am, &v);
            for o in 0..2 {
                let fd = (fp[o] - fm[o]) / (2.0 * h);
                assert!((jet.d_angles[o * 2 + i] - fd).abs() < 1e-8);
            }
            let mut vp = v;
            let mut vm = v;
            vp[i] += h;
            vm[i] -= h;
            let fp = p.eval(&a, &vp);
            let fm = p.eval(&a, &vm);
            for o in 0..2 {
                let fd = (fp[o] - fm[o]) / (2.0 * h);
                assert!((jet.d_vars[o * 2 + i] - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_malformed_terms() {
        let mut p = TrigPoly::zero(1, 2, 1);
        assert!(p.push(Monomial::new(Trig::Cos, vec![1], vec![0], vec![1.0])).is_err());
        assert!(p.push(Monomial::new(Trig::Cos, vec![1, 0], vec![0, 0], vec![1.0])).is_err());
        assert!(p.push(Monomial::new(Trig::Cos, vec![1, 0], vec![0], vec![1.0, 2.0])).is_err());
    }
}
