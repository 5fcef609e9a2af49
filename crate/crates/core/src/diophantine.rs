//! Diophantine conditions on `(omega, Omega, beta0)` over a finite lattice
//! window.
//!
//! For `(j, J) != 0` with `|j| + |J| <= order_bound` and `|q| <= 2` the margin
//! of a tuple is
//!
//! ```text
//!   |<j,omega> + <J,Omega> + <q,beta0>| * (|j| + |J|)^tau
//! ```
//!
//! and the condition with constant `gamma` holds on the window iff every
//! margin is at least `gamma`. All norms are l1 norms.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::compensated_dot;

pub const DEFAULT_ORDER_BOUND: u32 = 200;
/// `|q| <= 2`, fixed.
pub const MAX_Q_ORDER: i64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyData {
    pub omega: Vec<f64>,
    #[serde(rename = "Omega")]
    pub forcing: Vec<f64>,
    pub beta0: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
    pub order_bound: u32,
}

impl FrequencyData {
    pub fn new(omega: Vec<f64>, forcing: Vec<f64>, beta0: Vec<f64>, tau: f64, gamma: f64, order_bound: u32) -> Self {
        Self {
            omega,
            forcing,
            beta0,
            tau,
            gamma,
            order_bound,
        }
    }

    pub fn torus_dim(&self) -> usize {
        self.omega.len() + self.forcing.len()
    }

    /// `(omega, Omega)` concatenated.
    pub fn torus_freq(&self) -> Vec<f64> {
        let mut v = self.omega.clone();
        v.extend_from_slice(&self.forcing);
        v
    }

    fn check(&self) -> Result<()> {
        let bound = self.torus_dim() as f64 - 1.0;
        if !(self.tau > bound) {
            return Err(Error::BadTau { tau: self.tau, bound });
        }
        if self.order_bound < 1 {
            return Err(Error::BadDims("order_bound must be at least 1".into()));
        }
        if let Some(b) = self.beta0.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::BadDims(format!("beta0 entries must be positive, got {b}")));
        }
        Ok(())
    }
}

/// A lattice tuple `(j, J, q)` with its small divisor and margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub j: Vec<i64>,
    #[serde(rename = "J")]
    pub big_j: Vec<i64>,
    pub q: Vec<i64>,
    /// `<j,omega> + <J,Omega> + <q,beta0>`
    pub divisor: f64,
    /// `|j| + |J|`
    pub order: u32,
    pub margin: f64,
}

impl Resonance {
    fn key(&self) -> impl Iterator<Item = i64> + '_ {
        self.j.iter().chain(&self.big_j).chain(&self.q).copied()
    }

    /// First nonzero entry of `(j, J)` positive.
    pub fn is_canonical(&self) -> bool {
        self.j.iter().chain(&self.big_j).find(|&&v| v != 0).is_some_and(|&v| v > 0)
    }
}

fn lex_cmp(a: &Resonance, b: &Resonance) -> Ordering {
    a.key().cmp(b.key())
}

#[derive(Clone, Debug, Serialize)]
pub struct DiophantineReport {
    pub passed: bool,
    pub gamma: f64,
    pub tau: f64,
    /// Window is verified up to this order.
    pub order_bound: u32,
    /// Number of `(j, J, q)` tuples in the window, counting both signs.
    pub window_size: usize,
    pub min_margin: f64,
    /// Canonical minimizing tuple; ties go to the lexicographically smallest.
    pub minimizer: Option<Resonance>,
}

/// All integer vectors of length `dim` with `1 <= |k|_1 <= bound` whose first
/// nonzero entry is positive, ordered by `|k|_1` then lexicographically.
pub fn canonical_half_window(dim: usize, bound: u32) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for order in 1..=bound as i64 {
        let mut all = Vec::new();
        vectors_with_norm(dim, order, &mut Vec::new(), &mut all);
        all.retain(|k| k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0));
        all.sort();
        out.extend(all);
    }
    out
}

fn vectors_with_norm(dim: usize, norm: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
    if prefix.len() + 1 == dim {
        let used: i64 = prefix.iter().map(|v| v.abs()).sum();
        let rest = norm - used;
        prefix.push(rest);
        out.push(prefix.clone());
        prefix.pop();
        if rest != 0 {
            prefix.push(-rest);
            out.push(prefix.clone());
            prefix.pop();
        }
        return;
    }
    if dim == 0 {
        return;
    }
    let used: i64 = prefix.iter().map(|v| v.abs()).sum();
    let rest = norm - used;
    for v in -rest..=rest {
        prefix.push(v);
        vectors_with_norm(dim, norm, prefix, out);
        prefix.pop();
    }
}

/// All `q` of length `dim` with `|q|_1 <= 2`, lexicographically ordered.
pub fn q_window(dim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![0; dim]];
    for norm in 1..=MAX_Q_ORDER {
        vectors_with_norm(dim, norm, &mut Vec::new(), &mut out);
    }
    out.sort();
    out
}

struct Scanner<'a> {
    fd: &'a FrequencyData,
    freq: Vec<f64>,
    ks: Vec<Vec<i64>>,
    qs: Vec<Vec<i64>>,
}

impl<'a> Scanner<'a> {
    fn new(fd: &'a FrequencyData) -> Result<Self> {
        fd.check()?;
        let mut freq = fd.torus_freq();
        freq.extend_from_slice(&fd.beta0);
        Ok(Self {
            fd,
            freq,
            ks: canonical_half_window(fd.torus_dim(), fd.order_bound),
            qs: q_window(fd.beta0.len()),
        })
    }

    fn window_size(&self) -> usize {
        2 * self.ks.len() * self.qs.len()
    }

    fn for_each(&self, mut visit: impl FnMut(&[i64], &[i64], f64, u32, f64)) {
        let mut ints = vec![0.0; self.freq.len()];
        for k in &self.ks {
            let order: i64 = k.iter().map(|v| v.abs()).sum();
            let weight = (order as f64).powf(self.fd.tau);
            for (slot, v) in ints.iter_mut().zip(k) {
                *slot = *v as f64;
            }
            for q in &self.qs {
                for (slot, v) in ints[k.len()..].iter_mut().zip(q) {
                    *slot = *v as f64;
                }
                let divisor = compensated_dot(&ints, &self.freq);
                visit(k, q, divisor, order as u32, divisor.abs() * weight);
            }
        }
    }

    fn resonance(&self, k: &[i64], q: &[i64], divisor: f64, order: u32, margin: f64) -> Resonance {
        let n = self.fd.omega.len();
        Resonance {
            j: k[..n].to_vec(),
            big_j: k[n..].to_vec(),
            q: q.to_vec(),
            divisor,
            order,
            margin,
        }
    }

    fn minimum(&self) -> Option<Resonance> {
        let mut best: Option<Resonance> = None;
        self.for_each(|k, q, divisor, order, margin| {
            let better = match &best {
                None => true,
                Some(b) => {
                    margin < b.margin || (margin == b.margin && lex_cmp(&self.resonance(k, q, divisor, order, margin), b).is_lt())
                }
            };
            if better {
                best = Some(self.resonance(k, q, divisor, order, margin));
            }
        });
        best
    }
}

/// Checks the Diophantine inequality with `fd.gamma` on every tuple of the window.
pub fn diophantine_verify(fd: &FrequencyData) -> Result<DiophantineReport> {
    let scanner = Scanner::new(fd)?;
    let minimizer = scanner.minimum();
    let min_margin = minimizer.as_ref().map_or(f64::INFINITY, |r| r.margin);
    Ok(DiophantineReport {
        passed: min_margin >= fd.gamma,
        gamma: fd.gamma,
        tau: fd.tau,
        order_bound: fd.order_bound,
        window_size: scanner.window_size(),
        min_margin,
        minimizer,
    })
}

/// Largest `gamma` for which the condition holds on the window. Infinite
/// when the window is empty.
pub fn best_gamma_estimate(fd: &FrequencyData) -> Result<f64> {
    Ok(Scanner::new(fd)?.minimum().map_or(f64::INFINITY, |r| r.margin))
}

/// All tuples of the window (both signs) with margin below `threshold`,
/// ascending by margin. Among equal margins canonical tuples come first,
/// then lexicographic order.
pub fn resonance_scan(fd: &FrequencyData, threshold: f64) -> Result<Vec<Resonance>> {
    let scanner = Scanner::new(fd)?;
    let mut hits = Vec::new();
    scanner.for_each(|k, q, divisor, order, margin| {
        if margin < threshold {
            hits.push(scanner.resonance(k, q, divisor, order, margin));
            let nk: Vec<i64> = k.iter().map(|v| -v).collect();
            let nq: Vec<i64> = q.iter().map(|v| -v).collect();
            hits.push(scanner.resonance(&nk, &nq, -divisor, order, margin));
        }
    });
    hits.sort_by(|a, b| {
        a.margin
            .total_cmp(&b.margin)
            .then_with(|| b.is_canonical().cmp(&a.is_canonical()))
            .then_with(|| lex_cmp(a, b))
    });
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resonant() -> FrequencyData {
        FrequencyData::new(vec![1.0], vec![], vec![0.5], 0.5, 0.1, 10)
    }

    #[test]
    fn exact_second_order_resonance_fails() {
        let rep = diophantine_verify(&resonant()).unwrap();
        assert!(!rep.passed);
        let r = rep.minimizer.unwrap();
        assert_eq!((r.j.clone(), r.q.clone(), r.margin), (vec![1], vec![-2], 0.0));
        assert_eq!(best_gamma_estimate(&resonant()).unwrap(), 0.0);
        let scan = resonance_scan(&resonant(), 1e-12).unwrap();
        assert_eq!(scan.len(), 2);
        assert_eq!((scan[0].j.clone(), scan[0].q.clone()), (vec![1], vec![-2]));
    }

    #[test]
    fn empty_lattice_is_vacuous() {
        let fd = FrequencyData::new(vec![], vec![], vec![0.7], 0.0, 1.0, 50);
        let rep = diophantine_verify(&fd).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.window_size, 0);
        assert!(best_gamma_estimate(&fd).unwrap().is_infinite());
    }

    #[test]
    fn tau_bound() {
        let fd = FrequencyData::new(vec![1.0], vec![1.3], vec![], 1.0, 1.0, 5);
        assert!(matches!(diophantine_verify(&fd), Err(Error::BadTau { .. })));
    }

    #[test]
    fn window_counts() {
        // l1 sphere in Z^2 of radius r has 4r points; half of them canonical
        let ks = canonical_half_window(2, 3);
        assert_eq!(ks.len(), (4 + 8 + 12) / 2);
        assert_eq!(q_window(1).len(), 5);
        assert_eq!(q_window(2).len(), 13);
        let fd = FrequencyData::new(vec![1.0], vec![1.41], vec![0.3], 1.5, 0.0, 3);
        assert_eq!(resonance_scan(&fd, f64::INFINITY).unwrap().len(), 24 * 5);
    }

    #[test]
    fn gamma_is_sharp() {
        let mut fd = FrequencyData::new(vec![1.0], vec![1.618033988749895], vec![0.413], 1.5, 0.0, 40);
        let g = best_gamma_estimate(&fd).unwrap();
        assert!(g > 0.0);
        fd.gamma = g;
        assert!(diophantine_verify(&fd).unwrap().passed);
        fd.gamma = g * (1.0 + 1e-9);
        assert!(!diophantine_verify(&fd).unwrap().passed);
    }
}
