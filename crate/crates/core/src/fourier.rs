//! Truncated Fourier series on `T^d` with vector values, and the FFT grid
//! they are sampled on.
//!
//! Coefficients live on the box `|k_a| <= M` for every angle. Mode indices
//! enumerate the box with the first angle most significant. Grid points are
//! `theta_a = 2 pi i_a / g`, also with the first angle most significant.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub type C64 = Complex<f64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// The box of wave vectors `|k_a| <= modes` in `n_angles` dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeSet {
    pub n_angles: usize,
    pub modes: usize,
}

impl ModeSet {
    pub fn new(n_angles: usize, modes: usize) -> Self {
        Self { n_angles, modes }
    }

    fn side(&self) -> usize {
        2 * self.modes + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.n_angles as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn zero_index(&self) -> usize {
        self.len() / 2
    }

    pub fn wave(&self, mut idx: usize) -> Vec<i64> {
        let side = self.side();
        let mut k = vec![0i64; self.n_angles];
        for a in (0..self.n_angles).rev() {
            k[a] = (idx % side) as i64 - self.modes as i64;
            idx /= side;
        }
        k
    }

    pub fn index(&self, k: &[i64]) -> Option<usize> {
        let side = self.side();
        let mut idx = 0;
        for &v in k {
            if v.unsigned_abs() as usize > self.modes {
                return None;
            }
            idx = idx * side + (v + self.modes as i64) as usize;
        }
        Some(idx)
    }

    /// Index of `-k`; the box is centrally symmetric so this is a reflection.
    pub fn neg(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    /// Modes whose first nonzero component is positive, in index order.
    pub fn half(&self) -> Vec<usize> {
        (self.zero_index() + 1..self.len()).collect()
    }
}

/// Symmetry class of a field under `theta -> -theta`.
#[derive(Clone, Debug, PartialEq)]
pub enum Parity {
    None,
    /// `f(-theta) = -f(theta)`
    Odd,
    /// `f(-theta) = f(theta)`
    Even,
    /// `f(-theta) = K f(theta)`
    KTwisted(DMatrix<f64>),
}

impl Parity {
    fn twist(&self, dim: usize) -> Option<DMatrix<f64>> {
        match self {
            Parity::None => None,
            Parity::Odd => Some(-DMatrix::identity(dim, dim)),
            Parity::Even => Some(DMatrix::identity(dim, dim)),
            Parity::KTwisted(k) => Some(k.clone()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Parity::None => "none",
            Parity::Odd => "odd",
            Parity::Even => "even",
            Parity::KTwisted(_) => "k-twisted",
        }
    }
}

/// Real samples of a vector field on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub n_angles: usize,
    pub size: usize,
    pub dim: usize,
    /// `data[point * dim + component]`
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(n_angles: usize, size: usize, dim: usize) -> Self {
        Self {
            n_angles,
            size,
            dim,
            data: vec![0.0; size.pow(n_angles as u32) * dim],
        }
    }

    pub fn points(&self) -> usize {
        self.size.pow(self.n_angles as u32)
    }

    pub fn angles(&self, point: usize) -> Vec<f64> {
        grid_angles(self.n_angles, self.size, point)
    }

    pub fn value(&self, point: usize) -> &[f64] {
        &self.data[point * self.dim..(point + 1) * self.dim]
    }

    pub fn value_mut(&mut self, point: usize) -> &mut [f64] {
        &mut self.data[point * self.dim..(point + 1) * self.dim]
    }

    /// Grid index of `-theta`.
    pub fn neg(&self, point: usize) -> usize {
        grid_neg(self.n_angles, self.size, point)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn grid_angles(n_angles: usize, size: usize, mut point: usize) -> Vec<f64> {
    let mut th = vec![0.0; n_angles];
    for a in (0..n_angles).rev() {
        th[a] = TAU * (point % size) as f64 / size as f64;
        point /= size;
    }
    th
}

fn grid_neg(n_angles: usize, size: usize, mut point: usize) -> usize {
    let mut idx = vec![0; n_angles];
    for a in (0..n_angles).rev() {
        idx[a] = point % size;
        point /= size;
    }
    idx.iter().fold(0, |acc, &i| acc * size + (size - i) % size)
}

/// In-place multidimensional FFT on a `size^n_angles` array.
fn fft_nd(data: &mut [C64], n_angles: usize, size: usize, inverse: bool) {
    if n_angles == 0 {
        return;
    }
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(size)
    } else {
        planner.plan_fft_forward(size)
    };
    let total = data.len();
    let mut line = vec![ZERO; size];
    for a in 0..n_angles {
        let stride = size.pow((n_angles - 1 - a) as u32);
        let block = stride * size;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + off + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + off + i * stride] = *v;
                }
            }
        }
    }
}

/// Grid position of wave vector `k` under wrap-around.
fn wrapped_point(k: &[i64], size: usize) -> usize {
    k.iter().fold(0, |acc, &v| acc * size + v.rem_euclid(size as i64) as usize)
}

/// A vector-valued truncated Fourier series.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    modes: ModeSet,
    dim: usize,
    /// `coeffs[mode * dim + component]`
    coeffs: Vec<C64>,
    parity: Parity,
}

impl FourierField {
    pub fn zeros(modes: ModeSet, dim: usize, parity: Parity) -> Self {
        Self {
            modes,
            dim,
            coeffs: vec![ZERO; modes.len() * dim],
            parity,
        }
    }

    pub fn modes(&self) -> ModeSet {
        self.modes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parity(&self) -> &Parity {
        &self.parity
    }

    pub fn set_parity(&mut self, parity: Parity) {
        self.parity = parity;
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, mode: usize, comp: usize) -> C64 {
        self.coeffs[mode * self.dim + comp]
    }

    /// Sets the coefficient at `k` and its Hermitian partner at `-k`.
    pub fn set_real_mode(&mut self, k: &[i64], comp: usize, value: C64) {
        let idx = self.modes.index(k).expect("wave vector outside truncation");
        let neg = self.modes.neg(idx);
        self.coeffs[idx * self.dim + comp] = value;
        self.coeffs[neg * self.dim + comp] = value.conj();
        if idx == neg {
            self.coeffs[idx * self.dim + comp] = C64::new(value.re, 0.0);
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let z = self.modes.zero_index();
        (0..self.dim).map(|c| self.coeff(z, c).re).collect()
    }

    pub fn eval(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for mode in 0..self.modes.len() {
            let k = self.modes.wave(mode);
            let phase: f64 = k.iter().zip(theta).map(|(&k, &t)| k as f64 * t).sum();
            let e = C64::new(phase.cos(), phase.sin());
            for (c, o) in out.iter_mut().enumerate() {
                *o += (self.coeff(mode, c) * e).re;
            }
        }
        out
    }

    /// Samples the field on a grid with `size` points per angle.
    pub fn to_grid(&self, size: usize) -> Grid {
        let na = self.modes.n_angles;
        let mut grid = Grid::zeros(na, size, self.dim);
        let pts = grid.points();
        let mut buf = vec![ZERO; pts];
        for c in 0..self.dim {
            buf.iter_mut().for_each(|v| *v = ZERO);
            for mode in 0..self.modes.len() {
                let p = wrapped_point(&self.modes.wave(mode), size);
                buf[p] += self.coeff(mode, c);
            }
            fft_nd(&mut buf, na, size, true);
            for (p, v) in buf.iter().enumerate() {
                grid.data[p * self.dim + c] = v.re;
            }
        }
        grid
    }

    /// Discrete projection of grid samples onto `modes`.
    pub fn from_grid(grid: &Grid, modes: ModeSet, parity: Parity) -> Self {
        let mut field = Self::zeros(modes, grid.dim, parity);
        let pts = grid.points();
        let scale = 1.0 / pts as f64;
        let mut buf = vec![ZERO; pts];
        for c in 0..grid.dim {
            for (p, v) in buf.iter_mut().enumerate() {
                *v = C64::new(grid.data[p * grid.dim + c], 0.0);
            }
            fft_nd(&mut buf, grid.n_angles, grid.size, false);
            for mode in 0..modes.len() {
                let p = wrapped_point(&modes.wave(mode), grid.size);
                field.coeffs[mode * grid.dim + c] = buf[p] * scale;
            }
        }
        field.make_hermitian();
        field
    }

    /// Averages each coefficient with the conjugate of its partner at `-k`.
    pub fn make_hermitian(&mut self) {
        for mode in 0..self.modes.len() {
            let neg = self.modes.neg(mode);
            if neg < mode {
                continue;
            }
            for c in 0..self.dim {
                let a = self.coeffs[mode * self.dim + c];
                let b = self.coeffs[neg * self.dim + c];
                let v = (a + b.conj()) * 0.5;
                self.coeffs[mode * self.dim + c] = v;
                self.coeffs[neg * self.dim + c] = v.conj();
            }
        }
    }

    /// Largest `|c_k - conj(c_{-k})|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for mode in 0..self.modes.len() {
            let neg = self.modes.neg(mode);
            for c in 0..self.dim {
                d = d.max((self.coeff(mode, c) - self.coeff(neg, c).conj()).norm());
            }
        }
        d
    }

    /// Derivative along the constant vector field `freq` on the torus.
    pub fn derivative(&self, freq: &[f64]) -> Self {
        let mut out = Self::zeros(self.modes, self.dim, Parity::None);
        for mode in 0..self.modes.len() {
            let k = self.modes.wave(mode);
            let w: f64 = k.iter().zip(freq).map(|(&k, &f)| k as f64 * f).sum();
            let f = C64::new(0.0, w);
            for c in 0..self.dim {
                out.coeffs[mode * self.dim + c] = f * self.coeff(mode, c);
            }
        }
        out.parity = match self.parity {
            Parity::Odd => Parity::Even,
            Parity::Even => Parity::Odd,
            _ => Parity::None,
        };
        out
    }

    /// Partial derivative with respect to angle `a`.
    pub fn partial(&self, a: usize) -> Self {
        let mut e = vec![0.0; self.modes.n_angles];
        e[a] = 1.0;
        self.derivative(&e)
    }

    /// Projection onto the declared parity class together with the sup-norm
    /// of the change in coefficients.
    pub fn project(&self) -> (Self, f64) {
        let Some(t) = self.parity.twist(self.dim) else {
            return (self.clone(), 0.0);
        };
        let mut out = self.clone();
        let mut dist: f64 = 0.0;
        for mode in 0..self.modes.len() {
            let neg = self.modes.neg(mode);
            for i in 0..self.dim {
                let mut partner = ZERO;
                for j in 0..self.dim {
                    partner += self.coeff(neg, j) * t[(i, j)];
                }
                let v = (self.coeff(mode, i) + partner) * 0.5;
                dist = dist.max((v - self.coeff(mode, i)).norm());
                out.coeffs[mode * self.dim + i] = v;
            }
        }
        (out, dist)
    }

    /// Largest `|f(-theta) - T f(theta)|` over a grid, `T` from the parity tag.
    pub fn parity_defect(&self, size: usize) -> f64 {
        let Some(t) = self.parity.twist(self.dim) else {
            return 0.0;
        };
        let grid = self.to_grid(size);
        let mut d: f64 = 0.0;
        for p in 0..grid.points() {
            let v = grid.value(p);
            let w = grid.value(grid.neg(p));
            for i in 0..self.dim {
                let tv: f64 = (0..self.dim).map(|j| t[(i, j)] * v[j]).sum();
                d = d.max((w[i] - tv).abs());
            }
        }
        d
    }

    pub fn scale(&mut self, s: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.modes, self.dim), (other.modes, other.dim));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    /// Sum of coefficient moduli, an upper bound for the sup norm.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Same series on a larger or smaller truncation box.
    pub fn retruncate(&self, modes: usize) -> Self {
        let target = ModeSet::new(self.modes.n_angles, modes);
        let mut out = Self::zeros(target, self.dim, self.parity.clone());
        for mode in 0..self.modes.len() {
            if let Some(idx) = target.index(&self.modes.wave(mode)) {
                for c in 0..self.dim {
                    out.coeffs[idx * self.dim + c] = self.coeff(mode, c);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_field() -> FourierField {
        let mut f = FourierField::zeros(ModeSet::new(2, 3), 2, Parity::None);
        f.set_real_mode(&[0, 0], 0, C64::new(0.5, 0.0));
        f.set_real_mode(&[1, -2], 0, C64::new(0.25, -0.5));
        f.set_real_mode(&[3, 3], 1, C64::new(0.0, 1.0));
        f.set_real_mode(&[0, 1], 1, C64::new(-1.0, 0.125));
        f
    }

    #[test]
    fn mode_indexing() {
        let ms = ModeSet::new(2, 2);
        assert_eq!(ms.len(), 25);
        for i in 0..ms.len() {
            let k = ms.wave(i);
            assert_eq!(ms.index(&k), Some(i));
            let nk: Vec<i64> = k.iter().map(|v| -v).collect();
            assert_eq!(ms.index(&nk), Some(ms.neg(i)));
        }
        assert_eq!(ms.wave(ms.zero_index()), vec![0, 0]);
        assert!(ms.half().iter().all(|&i| ms.wave(i).iter().find(|&&v| v != 0).unwrap() > &0));
        assert_eq!(ms.half().len(), 12);
    }

    #[test]
    fn grid_round_trip_and_pointwise_eval() {
        let f = sample_field();
        let grid = f.to_grid(8);
        for p in [0, 5, 17, 63] {
            let direct = f.eval(&grid.angles(p));
            for c in 0..2 {
                assert!((direct[c] - grid.value(p)[c]).abs() < 1e-13);
            }
        }
        let back = FourierField::from_grid(&grid, f.modes(), Parity::None);
        for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let f = sample_field();
        let w = [1.0, 1.618];
        let df = f.derivative(&w);
        let th = [0.3, 1.1];
        let h = 1e-6;
        let plus = f.eval(&[th[0] + h * w[0], th[1] + h * w[1]]);
        let minus = f.eval(&[th[0] - h * w[0], th[1] - h * w[1]]);
        let d = df.eval(&th);
        for c in 0..2 {
            assert!(((plus[c] - minus[c]) / (2.0 * h) - d[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_is_idempotent_and_exact_on_grid() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        for parity in [Parity::Odd, Parity::Even, Parity::KTwisted(k)] {
            let mut f = sample_field();
            f.set_parity(parity);
            let (g, d) = f.project();
            assert!(d > 0.0);
            assert!(g.parity_defect(9) < 1e-14);
            let (h, d2) = g.project();
            assert_eq!(d2, 0.0);
            assert_eq!(h, g);
        }
    }

    #[test]
    fn constant_is_removed_by_odd_projection() {
        let mut f = FourierField::zeros(ModeSet::new(2, 2), 1, Parity::Odd);
        f.set_real_mode(&[0, 0], 0, C64::new(0.7, 0.0));
        let (g, d) = f.project();
        assert_eq!(g.max_coeff(), 0.0);
        assert_eq!(d, 0.7);
    }

    #[test]
    fn grid_negation() {
        let g = Grid::zeros(2, 6, 1);
        for p in 0..g.points() {
            let a = g.angles(p);
            let b = g.angles(g.neg(p));
            for (x, y) in a.iter().zip(&b) {
                assert!(((x + y) / TAU - ((x + y) / TAU).round()).abs() < 1e-14);
            }
        }
    }
}
