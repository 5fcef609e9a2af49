//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

const SCHUR_ITER: usize = 1000;
const SHIFTS: [f64; 6] = [0.0, 0.371, -0.613, 1.127, -1.493, 2.281];

/// Eigenvalues of a real square matrix. The QR iteration is capped and
/// retried on shifted copies when it stalls.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    let n = m.nrows();
    let scale = m.amax().max(1e-300);
    for s in SHIFTS {
        let a = m + DMatrix::<f64>::identity(n, n) * (s * scale);
        if let Some(schur) = nalgebra::Schur::try_new(a, f64::EPSILON, SCHUR_ITER) {
            return schur.complex_eigenvalues().iter().map(|z| Complex::new(z.re - s * scale, z.im)).collect();
        }
    }
    (0..n).map(|i| Complex::new(m[(i, i)], 0.0)).collect()
}

/// Eigenvalues of a complex square matrix, same strategy as [`eigenvalues`].
pub fn complex_eigenvalues(m: &DMatrix<Complex<f64>>) -> Vec<Complex<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-300);
    for s in SHIFTS {
        let shift = Complex::new(s * scale, 0.0);
        let a = m + DMatrix::<Complex<f64>>::identity(n, n) * shift;
        if let Some(ev) = nalgebra::Schur::try_new(a, f64::EPSILON, SCHUR_ITER).and_then(|sc| sc.eigenvalues()) {
            return ev.iter().map(|z| z - shift).collect();
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

/// Number of singular values above `rel_tol * max(1, sigma_max)`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max).max(1.0);
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// `a + b` as an unevaluated sum `(s, e)` with `s = fl(a + b)`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Dot product evaluated as if in twice the working precision.
pub fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut err = 0.0;
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(*y, -p);
        let (s, se) = two_sum(sum, p);
        sum = s;
        err += se + pe;
    }
    sum + err
}

/// Solves the square real system `a x = b` by LU with partial pivoting.
pub fn solve_dense(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    use faer::linalg::solvers::Solve;
    debug_assert_eq!(a.len(), n * n);
    let mat = faer::Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let lu = mat.partial_piv_lu();
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence("singular linearized system".into()));
    }
    Ok(out)
}

/// Solves the small complex Sylvester equation `c U - A U + U B = R`.
pub fn solve_sylvester(
    c: Complex<f64>,
    a: &DMatrix<Complex<f64>>,
    b: &DMatrix<Complex<f64>>,
    r: &DMatrix<Complex<f64>>,
) -> Option<DMatrix<Complex<f64>>> {
    let (p, q) = (a.nrows(), b.nrows());
    if p == 1 && q == 1 {
        let den = c - a[(0, 0)] + b[(0, 0)];
        return Some(DMatrix::from_element(1, 1, r[(0, 0)] / den));
    }
    // column-major vec: (I (x) (cI - A) + B^T (x) I) vec U = vec R
    let n = p * q;
    let mut big = DMatrix::<Complex<f64>>::zeros(n, n);
    for j in 0..q {
        for i in 0..p {
            let row = j * p + i;
            for k in 0..p {
                let v = if i == k { c } else { Complex::new(0.0, 0.0) } - a[(i, k)];
                big[(row, j * p + k)] += v;
            }
            for l in 0..q {
                big[(row, l * p + i)] += b[(l, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(n, r.iter().copied());
    let sol = big.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(p, q, sol.as_slice()))
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres).
/// Returns `assign[row] = col`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols());
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    // potentials and matching, 1-based with a sentinel column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}
