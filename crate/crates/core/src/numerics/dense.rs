//! Small dense complex-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QgpeError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn eye(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

/// Frobenius inner product `tr(a^dag b)`.
pub fn inner(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(a: &CMat) -> Complex64 {
    a.diagonal().iter().sum()
}

/// `tr(a b)` without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn antihermitian_part(a: &CMat) -> CMat {
    (a - a.adjoint()).scale(0.5)
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn check_finite(a: &CMat, what: &str) -> Result<()> {
    if all_finite(a) {
        Ok(())
    } else {
        Err(QgpeError::InvalidInput(format!("{what} has non-finite entries")))
    }
}

pub fn check_square(a: &CMat, d: usize, what: &str) -> Result<()> {
    if a.nrows() != d || a.ncols() != d {
        return Err(QgpeError::DimensionMismatch(format!(
            "{what} is {}x{}, expected {d}x{d}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Complex Schur factorization `m = u t u^dag` with `t` upper triangular.
pub fn schur(m: &CMat) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    if n == 1 {
        return Ok((eye(1), m.clone()));
    }
    let s = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15 * (1.0 + norm(m)), 10_000 * n)
        .ok_or_else(|| QgpeError::InvalidInput("Schur iteration did not converge".into()))?;
    let (u, mut t) = s.unpack();
    // clear the strictly lower part left over from the QR sweeps
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = ZERO;
        }
    }
    Ok((u, t))
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    let (_, t) = schur(m)?;
    Ok(t.diagonal().iter().copied().collect())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let e = nalgebra::linalg::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(m.nrows(), m.ncols());
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    hermitian_eigen(m).0
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > 1e14 {
        return Err(QgpeError::SingularGauge { condition: cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(QgpeError::SingularGauge { condition: cond })
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Regularized inverse `(rho + eps I)^{-1}` of a Hermitian positive semidefinite matrix.
pub fn regularized_inverse(rho: &CMat, eps: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(rho);
    let d = rho.nrows();
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let s = 1.0 / (v.max(0.0) + eps);
        for i in 0..d {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * vecs.adjoint()
}

/// Column-major vectorization.
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Dense matrix of a linear action on `d x d` matrices, column-major vectorized.
pub fn dense_matrix_of(d: usize, action: impl Fn(&CMat) -> CMat) -> CMat {
    let n = d * d;
    let mut out = CMat::zeros(n, n);
    for col in 0..n {
        let mut e = CMat::zeros(d, d);
        e[(col % d, col / d)] = ONE;
        let y = action(&e);
        out.set_column(col, &vectorize(&y));
    }
    out
}

/// Null vector of a square matrix known to be (numerically) singular,
/// taken as the right singular vector of the smallest singular value.
pub fn null_vector(m: &CMat) -> (CVec, f64) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (mut imin, mut smin) = (0, f64::INFINITY);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < smin {
            smin = *s;
            imin = i;
        }
    }
    let v = v_t.row(imin).adjoint();
    (v, smin)
}

/// Fix the phase of a matrix so that its trace is real and positive, then
/// return its Hermitian part.
pub fn phase_fix_hermitian(m: &CMat) -> CMat {
    let t = trace(m);
    let phase = if t.norm() > 0.0 { t.conj() / t.norm() } else { ONE };
    hermitian_part(&m.map(|z| z * phase))
}

/// Lower-triangular Cholesky factor `c` of a Hermitian positive definite matrix, `m = c c^dag`.
pub fn cholesky_lower(m: &CMat) -> Option<CMat> {
    nalgebra::linalg::Cholesky::new(hermitian_part(m)).map(|ch| ch.l())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_reconstructs() {
        let m = CMat::from_fn(4, 4, |i, j| c((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
        let (u, t) = schur(&m).unwrap();
        let back = &u * &t * u.adjoint();
        assert!(norm(&(back - &m)) < 1e-12);
        assert!(norm(&(u.adjoint() * &u - eye(4))) < 1e-12);
    }

    #[test]
    fn dense_matrix_matches_kron() {
        let a = CMat::from_fn(2, 2, |i, j| c(i as f64 + 1.0, j as f64));
        let b = CMat::from_fn(2, 2, |i, j| c(j as f64 - 0.5, i as f64));
        // vec(A X B) = (B^T kron A) vec(X)
        let m = dense_matrix_of(2, |x| &a * x * &b);
        assert!(norm(&(m - kron(&b.transpose(), &a))) < 1e-14);
    }

    #[test]
    fn regularized_inverse_of_identity() {
        let inv = regularized_inverse(&eye(3).scale(2.0), 0.0);
        assert!(norm(&(inv - eye(3).scale(0.5))) < 1e-14);
    }
}
