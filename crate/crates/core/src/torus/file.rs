//! Coefficient files for embeddings, written as real trigonometric terms in
//! the same style as system files.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TorusEmbedding;
use crate::error::{Error, Result};
use crate::fourier::{FourierField, ModeSet, Parity, C64};
use crate::model::Dims;
use crate::trig::Trig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTerm {
    pub trig: Trig,
    pub wave: Vec<i64>,
    pub coeff: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub forcing: usize,
    pub s: usize,
    pub modes: usize,
    pub eps: f64,
    pub nu: Vec<f64>,
    #[serde(rename = "Theta")]
    pub theta: Vec<f64>,
    pub freq: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "A", default)]
    pub a: Vec<CoefficientTerm>,
    #[serde(rename = "B", default)]
    pub b: Vec<CoefficientTerm>,
    #[serde(rename = "C", default)]
    pub c: Vec<CoefficientTerm>,
    #[serde(rename = "D", default)]
    pub d: Vec<CoefficientTerm>,
}

fn terms(f: &FourierField) -> Vec<CoefficientTerm> {
    let ms = f.modes();
    let mut out = Vec::new();
    let zero = ms.zero_index();
    let cos0: Vec<f64> = (0..f.dim()).map(|c| f.coeff(zero, c).re).collect();
    if cos0.iter().any(|v| *v != 0.0) {
        out.push(CoefficientTerm {
            trig: Trig::Cos,
            wave: ms.wave(zero),
            coeff: cos0,
        });
    }
    // c e^{ik.t} + conj(c) e^{-ik.t} = 2 Re c cos(k.t) - 2 Im c sin(k.t)
    for idx in ms.half() {
        let cos: Vec<f64> = (0..f.dim()).map(|c| 2.0 * f.coeff(idx, c).re).collect();
        let sin: Vec<f64> = (0..f.dim()).map(|c| -2.0 * f.coeff(idx, c).im).collect();
        for (trig, coeff) in [(Trig::Cos, cos), (Trig::Sin, sin)] {
            if coeff.iter().any(|v| *v != 0.0) {
                out.push(CoefficientTerm {
                    trig,
                    wave: ms.wave(idx),
                    coeff,
                });
            }
        }
    }
    out
}

fn field(terms: &[CoefficientTerm], ms: ModeSet, dim: usize, parity: Parity, name: &str) -> Result<FourierField> {
    let mut f = FourierField::zeros(ms, dim, parity);
    for t in terms {
        if t.coeff.len() != dim || t.wave.len() != ms.n_angles {
            return Err(Error::DimensionMismatch(format!("term of {name} has the wrong shape")));
        }
        let idx = ms
            .index(&t.wave)
            .ok_or_else(|| Error::DimensionMismatch(format!("wave vector {:?} of {name} exceeds the truncation", t.wave)))?;
        let neg = ms.neg(idx);
        for (c, &v) in t.coeff.iter().enumerate() {
            let add = match (t.trig, idx == neg) {
                (Trig::Cos, true) => C64::new(v, 0.0),
                (Trig::Sin, true) => C64::new(0.0, 0.0),
                (Trig::Cos, false) => C64::new(0.5 * v, 0.0),
                (Trig::Sin, false) => C64::new(0.0, -0.5 * v),
            };
            f.coeffs_mut()[idx * dim + c] += add;
            if idx != neg {
                f.coeffs_mut()[neg * dim + c] += add.conj();
            }
        }
    }
    Ok(f)
}

impl EmbeddingFile {
    pub fn from_embedding(t: &TorusEmbedding) -> Self {
        let d = t.dims;
        let k = match t.d.parity() {
            Parity::KTwisted(k) => k.clone(),
            _ => DMatrix::identity(2 * d.p, 2 * d.p),
        };
        Self {
            n: d.n,
            m: d.m,
            p: d.p,
            forcing: d.forcing,
            s: d.s,
            modes: t.modes().modes,
            eps: t.eps,
            nu: t.nu.clone(),
            theta: t.theta.clone(),
            freq: t.freq.clone(),
            k: (0..k.nrows()).map(|i| k.row(i).iter().copied().collect()).collect(),
            a: terms(&t.a),
            b: terms(&t.b),
            c: terms(&t.c),
            d: terms(&t.d),
        }
    }

    pub fn build(&self) -> Result<TorusEmbedding> {
        let dims = Dims::new(self.n, self.m, self.p, self.forcing, self.s);
        let p2 = 2 * self.p;
        if self.k.len() != p2 || self.k.iter().any(|r| r.len() != p2) {
            return Err(Error::BadDims(format!("K must be {p2}x{p2}")));
        }
        if self.freq.len() != dims.torus_dim() || self.nu.len() != dims.s || self.theta.len() != dims.forcing {
            return Err(Error::DimensionMismatch("freq, nu or Theta has the wrong length".into()));
        }
        let k = DMatrix::from_fn(p2, p2, |i, j| self.k[i][j]);
        let ms = ModeSet::new(dims.torus_dim(), self.modes);
        Ok(TorusEmbedding {
            dims,
            a: field(&self.a, ms, dims.n, Parity::Odd, "A")?,
            b: field(&self.b, ms, dims.forcing, Parity::Odd, "B")?,
            c: field(&self.c, ms, dims.m, Parity::Odd, "C")?,
            d: field(&self.d, ms, p2, Parity::KTwisted(k), "D")?,
            theta: self.theta.clone(),
            nu: self.nu.clone(),
            eps: self.eps,
            freq: self.freq.clone(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TorusEmbedding> {
        Self::parse(&std::fs::read_to_string(path)?)?.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_file_round_trip() {
        let dims = Dims::new(1, 1, 1, 1, 2);
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let mut t = TorusEmbedding::zero(dims, &k, 2, vec![1.0, 1.618], vec![0.1, -0.2], 1e-3);
        t.a.set_real_mode(&[1, 0], 0, C64::new(0.0, 0.123456789012345));
        t.d.set_real_mode(&[1, -1], 0, C64::new(0.0, 1.0 / 3.0));
        t.d.set_real_mode(&[1, -1], 1, C64::new(0.2, 0.0));
        t.theta = vec![1e-17];
        let text = EmbeddingFile::from_embedding(&t).to_toml().unwrap();
        let back = EmbeddingFile::parse(&text).unwrap().build().unwrap();
        assert_eq!(back, t);
    }
}
