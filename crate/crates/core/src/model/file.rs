//! Structured-text (TOML) system definitions.
//!
//! ```toml
//! n = 1
//! m = 1
//! p = 1
//! N = 1
//! s = 2
//! K = [[1.0, 0.0], [0.0, -1.0]]
//! Omega = [1.618033988749895]
//!
//! [domain]
//! y_radius = 1.0
//! z_radius = 1.0
//! nu_radius = 0.1
//! eps_max = 0.05
//!
//! [[H]]
//! trig = "cos"
//! wave = [0, 0]            # (j, J)
//! powers = [0, 0, 0, 0, 0, 0]  # exponents of (y, z, nu, eps)
//! coeff = [1.0]
//! ```

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Components, Dims, Domain, InvolutionSpec, SystemFamily};
use crate::error::{Error, Result};
use crate::trig::{Monomial, TrigPoly};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub forcing: usize,
    pub s: usize,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "Omega")]
    pub omega: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(rename = "H", default)]
    pub freq: Vec<Monomial>,
    #[serde(rename = "Xi", default)]
    pub xi: Vec<Monomial>,
    #[serde(rename = "Lambda", default)]
    pub lambda: Vec<Monomial>,
    #[serde(default)]
    pub f_sharp: Vec<Monomial>,
    #[serde(default)]
    pub g_sharp: Vec<Monomial>,
    #[serde(default)]
    pub h_sharp: Vec<Monomial>,
    #[serde(default)]
    pub f: Vec<Monomial>,
    #[serde(default)]
    pub g: Vec<Monomial>,
    #[serde(default)]
    pub h: Vec<Monomial>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<Monomial>,
}

/// A system together with its involution, as read from one document.
#[derive(Clone, Debug)]
pub struct SystemDefinition {
    pub system: SystemFamily,
    pub involution: InvolutionSpec,
}

impl SystemDefinition {
    pub fn parse(text: &str) -> Result<Self> {
        let file: SystemFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&SystemFile::from_definition(self)).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl SystemFile {
    pub fn build(self) -> Result<SystemDefinition> {
        let dims = Dims::new(self.n, self.m, self.p, self.forcing, self.s);
        let p2 = 2 * self.p;
        if self.k.len() != p2 || self.k.iter().any(|r| r.len() != p2) {
            return Err(Error::BadDims(format!("K must be {p2}x{p2}")));
        }
        let k = DMatrix::from_fn(p2, p2, |i, j| self.k[i][j]);
        let involution = InvolutionSpec::new(k, dims)?;
        let na = dims.torus_dim();
        let nv = dims.n_vars();
        let poly = |out: usize, terms: Vec<Monomial>| TrigPoly::new(out, na, nv, terms);
        let comps = Components {
            freq: poly(dims.n, self.freq)?,
            xi: poly(dims.m, self.xi)?,
            lambda: poly(p2 * p2, self.lambda)?,
            f_sharp: poly(dims.n, self.f_sharp)?,
            g_sharp: poly(dims.m, self.g_sharp)?,
            h_sharp: poly(p2, self.h_sharp)?,
            f: poly(dims.n, self.f)?,
            g: poly(dims.m, self.g)?,
            h: poly(p2, self.h)?,
            drift: poly(dims.forcing, self.drift)?,
        };
        let domain = self.domain.unwrap_or_else(|| Domain::unit(&dims));
        let system = SystemFamily::new(dims, self.omega, domain, comps)?;
        Ok(SystemDefinition { system, involution })
    }

    pub fn from_definition(def: &SystemDefinition) -> Self {
        let d = *def.system.dims();
        let c = def.system.components();
        let k = &def.involution.k;
        let terms = |p: &TrigPoly| p.terms().to_vec();
        Self {
            n: d.n,
            m: d.m,
            p: d.p,
            forcing: d.forcing,
            s: d.s,
            k: (0..k.nrows()).map(|i| k.row(i).iter().copied().collect()).collect(),
            omega: def.system.forcing_freq().to_vec(),
            domain: Some(def.system.domain().clone()),
            freq: terms(&c.freq),
            xi: terms(&c.xi),
            lambda: terms(&c.lambda),
            f_sharp: terms(&c.f_sharp),
            g_sharp: terms(&c.g_sharp),
            h_sharp: terms(&c.h_sharp),
            f: terms(&c.f),
            g: terms(&c.g),
            h: terms(&c.h),
            drift: terms(&c.drift),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
n = 1
m = 1
p = 1
N = 1
s = 2
K = [[1.0, 0.0], [0.0, -1.0]]
Omega = [1.618033988749895]

[[H]]
trig = "cos"
wave = [0, 0]
powers = [0, 0, 0, 0, 0, 0]
coeff = [1.0]

[[H]]
trig = "cos"
wave = [0, 0]
powers = [0, 0, 0, 1, 0, 0]
coeff = [1.0]

[[Lambda]]
trig = "cos"
wave = [0, 0]
powers = [0, 0, 0, 0, 0, 0]
coeff = [0.0, 0.5, 0.5, 0.0]

[[h]]
trig = "sin"
wave = [1, 0]
powers = [0, 0, 0, 0, 0, 0]
coeff = [1.0, 0.0]
"#;

    #[test]
    fn parses_and_round_trips() {
        let def = SystemDefinition::parse(DOC).unwrap();
        assert_eq!(def.system.dims().torus_dim(), 2);
        assert_eq!(def.system.freq_at(&[0.0], &[0.25, 0.0]), vec![1.25]);
        let text = def.to_toml().unwrap();
        let again = SystemDefinition::parse(&text).unwrap();
        assert_eq!(again.system, def.system);
        assert_eq!(again.involution, def.involution);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = DOC.replace("K = [[1.0, 0.0], [0.0, -1.0]]", "K = [[1.0]]");
        assert!(matches!(SystemDefinition::parse(&bad), Err(Error::BadDims(_))));
        let bad = DOC.replace("coeff = [1.0, 0.0]", "coeff = [1.0]");
        assert!(matches!(SystemDefinition::parse(&bad), Err(Error::DimensionMismatch(_))));
        assert!(matches!(SystemDefinition::parse("n = "), Err(Error::Parse(_))));
    }
}
