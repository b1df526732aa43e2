//! Bartels-Stewart solver for `A X + X B = C` over complex matrices.

use num_complex::Complex64;

use super::dense::{norm, schur, CMat, ZERO};
use crate::error::{QgpeError, Result};

/// Schur factors of `A` and `B`, reusable across many right-hand sides.
#[derive(Debug, Clone)]
pub struct SylvesterSolver {
    ua: CMat,
    ta: CMat,
    ub: CMat,
    tb: CMat,
    scale: f64,
}

impl SylvesterSolver {
    pub fn new(a: &CMat, b: &CMat) -> Result<Self> {
        if !a.is_square() || !b.is_square() {
            return Err(QgpeError::DimensionMismatch("Sylvester operands must be square".into()));
        }
        let (ua, ta) = schur(a)?;
        let (ub, tb) = schur(b)?;
        let scale = norm(a) + norm(b);
        let solver = SylvesterSolver { ua, ta, ub, tb, scale };
        let gap = solver.spectral_gap();
        if gap <= 1e-13 * scale.max(1e-300) {
            return Err(QgpeError::SingularSpectrum { gap });
        }
        Ok(solver)
    }

    /// Smallest `|lambda_i(A) + lambda_j(B)|`.
    pub fn spectral_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for i in 0..self.ta.nrows() {
            for j in 0..self.tb.nrows() {
                gap = gap.min((self.ta[(i, i)] + self.tb[(j, j)]).norm());
            }
        }
        gap
    }

    pub fn solve(&self, c: &CMat) -> Result<CMat> {
        let m = self.ta.nrows();
        let n = self.tb.nrows();
        if c.nrows() != m || c.ncols() != n {
            return Err(QgpeError::DimensionMismatch("Sylvester right-hand side".into()));
        }
        let cp = self.ua.adjoint() * c * &self.ub;
        let mut y = CMat::zeros(m, n);
        for j in 0..n {
            let mut rhs: Vec<Complex64> = (0..m).map(|i| cp[(i, j)]).collect();
            for k in 0..j {
                let t = self.tb[(k, j)];
                if t != ZERO {
                    for i in 0..m {
                        rhs[i] -= t * y[(i, k)];
                    }
                }
            }
            let shift = self.tb[(j, j)];
            for i in (0..m).rev() {
                let mut acc = rhs[i];
                for k in (i + 1)..m {
                    acc -= self.ta[(i, k)] * y[(k, j)];
                }
                let piv = self.ta[(i, i)] + shift;
                if piv.norm() <= 1e-13 * self.scale.max(1e-300) {
                    return Err(QgpeError::SingularSpectrum { gap: piv.norm() });
                }
                y[(i, j)] = acc / piv;
            }
        }
        Ok(&self.ua * y * self.ub.adjoint())
    }
}

/// Solve `A X + X B = C` directly.
pub fn solve_sylvester(a: &CMat, b: &CMat, c: &CMat) -> Result<CMat> {
    SylvesterSolver::new(a, b)?.solve(c)
}
