//! Small dense Hermitian helpers shared by the solvers.

use nalgebra::{Cholesky, SymmetricEigen};
use num_complex::Complex64;

use crate::{CMatrix, CVector, Error, Result};

/// Inverse of a Hermitian positive definite matrix through its Cholesky factor.
pub fn hpd_inverse(m: &CMatrix) -> Result<CMatrix> {
    Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite)
}

/// `x x^H`.
pub fn outer(x: &CVector) -> CMatrix {
    x * x.adjoint()
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Sums along the upper diagonals of a square matrix: `s[d] = sum_i M[i, i+d]`.
pub fn diagonal_sums(m: &CMatrix) -> Vec<Complex64> {
    let n = m.nrows();
    let mut sums = vec![Complex64::new(0.0, 0.0); n];
    for (d, s) in sums.iter_mut().enumerate() {
        for i in 0..n - d {
            *s += m[(i, i + d)];
        }
    }
    sums
}

/// `a^H M a` for a ULA steering vector `a` (entries `e^{i d theta}`), given the
/// diagonal sums of a Hermitian `M`. Costs O(m) instead of O(m^2).
pub fn ula_form(sums: &[Complex64], steering: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    for (s, a) in sums[1..].iter().zip(&steering[1..]) {
        acc += s.re * a.re - s.im * a.im;
    }
    sums[0].re + 2.0 * acc
}

/// [`ula_form`] for two matrices sharing one pass over the steering vector.
pub fn ula_form_pair(first: &[Complex64], second: &[Complex64], steering: &[Complex64]) -> (f64, f64) {
    let (mut x, mut y) = (0.0, 0.0);
    for ((s, t), a) in first[1..].iter().zip(&second[1..]).zip(&steering[1..]) {
        x += s.re * a.re - s.im * a.im;
        y += t.re * a.re - t.im * a.im;
    }
    (first[0].re + 2.0 * x, second[0].re + 2.0 * y)
}

/// `a^H M a` evaluated directly.
pub fn quad_form(m: &CMatrix, a: &CVector) -> f64 {
    (a.adjoint() * m * a)[(0, 0)].re
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Hermitian defect `||M - M^H||_F / ||M||_F` (0 for the zero matrix).
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let norm = frobenius(m);
    if norm == 0.0 {
        return 0.0;
    }
    frobenius(&(m - m.adjoint())) / norm
}

/// Forces exact Hermitian symmetry by averaging with the adjoint.
pub fn symmetrize(m: &mut CMatrix) {
    let adj = m.adjoint();
    *m += adj;
    *m *= Complex64::new(0.5, 0.0);
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// descending. Each eigenvector is rotated so that its first component with
/// modulus above `1e-12` is real and positive.
pub fn hermitian_eigen_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let mut h = m.clone();
    symmetrize(&mut h);
    let eig = SymmetricEigen::new(h);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let phase = v
            .iter()
            .find(|z| z.norm() > 1e-12)
            .map(|z| z.conj() / z.norm())
            .unwrap_or(Complex64::new(1.0, 0.0));
        for r in 0..n {
            vectors[(r, col)] = v[r] * phase;
        }
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let (values, _) = hermitian_eigen_desc(m);
    values.last().copied().unwrap_or(0.0)
}

/// PSD check with tolerance relative to the Frobenius norm.
pub fn is_psd(m: &CMatrix, rel_tol: f64) -> bool {
    min_eigenvalue(m) >= -rel_tol * frobenius(m).max(f64::MIN_POSITIVE)
}
