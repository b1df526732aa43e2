//! Matrix-free linear maps on `rows x cols` complex matrices and GMRES.

use num_complex::Complex64;

use super::dense::{inner, norm, CMat, ZERO};
use crate::error::{QgpeError, Result};

/// A linear action on complex matrices together with its adjoint.
///
/// `precondition` returns an approximation of the inverse action; the default
/// is the identity.
pub trait LinearMap: Sync {
    fn shape(&self) -> (usize, usize);
    fn apply(&self, x: &CMat) -> CMat;
    fn apply_adjoint(&self, x: &CMat) -> CMat;
    fn precondition(&self, x: &CMat) -> CMat {
        x.clone()
    }
}

/// A [`LinearMap`] built from closures, mostly for tests and one-off solves.
pub struct FnMap<F, G>
where
    F: Fn(&CMat) -> CMat + Sync,
    G: Fn(&CMat) -> CMat + Sync,
{
    pub shape: (usize, usize),
    pub action: F,
    pub adjoint: G,
}

impl<F, G> LinearMap for FnMap<F, G>
where
    F: Fn(&CMat) -> CMat + Sync,
    G: Fn(&CMat) -> CMat + Sync,
{
    fn shape(&self) -> (usize, usize) {
        self.shape
    }
    fn apply(&self, x: &CMat) -> CMat {
        (self.action)(x)
    }
    fn apply_adjoint(&self, x: &CMat) -> CMat {
        (self.adjoint)(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub tol: f64,
    pub max_matvec: usize,
    pub restart: usize,
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: CMat,
    pub relative_residual: f64,
    pub matvecs: usize,
}

fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    if a.norm() == 0.0 {
        return (0.0, Complex64::new(1.0, 0.0), b);
    }
    let t = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let phase = a / a.norm();
    (a.norm() / t, phase * b.conj() / t, phase * t)
}

/// Restarted, right-preconditioned GMRES for `op(x) = b`.
pub fn gmres(
    op: &dyn Fn(&CMat) -> CMat,
    precond: &dyn Fn(&CMat) -> CMat,
    b: &CMat,
    opts: GmresOptions,
) -> GmresOutcome {
    gmres_from(op, precond, b, None, opts)
}

/// GMRES started from `x0`; the tolerance stays relative to `|b|`.
pub fn gmres_from(
    op: &dyn Fn(&CMat) -> CMat,
    precond: &dyn Fn(&CMat) -> CMat,
    b: &CMat,
    x0: Option<&CMat>,
    opts: GmresOptions,
) -> GmresOutcome {
    let (rows, cols) = (b.nrows(), b.ncols());
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return GmresOutcome { x: CMat::zeros(rows, cols), relative_residual: 0.0, matvecs: 0 };
    }
    let mut x = x0.cloned().unwrap_or_else(|| CMat::zeros(rows, cols));
    let fresh = x0.is_none();
    let m = opts.restart.max(1);
    let mut matvecs = 0usize;
    let mut rel = 1.0;
    while matvecs < opts.max_matvec {
        let r = if matvecs == 0 && fresh { b.clone() } else { b - op(&x) };
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            break;
        }
        let mut basis: Vec<CMat> = vec![r.unscale(beta)];
        let mut zs: Vec<CMat> = Vec::with_capacity(m);
        let mut h = vec![vec![ZERO; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut used = 0;
        for j in 0..m {
            let z = precond(&basis[j]);
            let mut w = op(&z);
            matvecs += 1;
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = inner(v, &w);
                    h[i][j] += hij;
                    w.zip_apply(v, |wk, vk| *wk -= vk * hij);
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = Complex64::new(hn, 0.0);
            for i in 0..j {
                let (ci, si) = (cs[i], sn[i]);
                let (a, bb) = (h[i][j], h[i + 1][j]);
                h[i][j] = a * ci + si * bb;
                h[i + 1][j] = -si.conj() * a + bb * ci;
            }
            let (cj, sj, rj) = givens(h[j][j], h[j + 1][j]);
            cs[j] = cj;
            sn[j] = sj;
            h[j][j] = rj;
            h[j + 1][j] = ZERO;
            let gj = g[j];
            g[j] = gj * cj;
            g[j + 1] = -sj.conj() * gj;
            zs.push(z);
            used = j + 1;
            rel = g[j + 1].norm() / bnorm;
            if rel <= opts.tol || matvecs >= opts.max_matvec || hn <= 1e-300 {
                break;
            }
            basis.push(w.unscale(hn));
        }
        let mut y = vec![ZERO; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in (i + 1)..used {
                acc -= h[i][k] * y[k];
            }
            y[i] = acc / h[i][i];
        }
        for (yi, z) in y.iter().zip(zs.iter()) {
            x.zip_apply(z, |xk, zk| *xk += zk * *yi);
        }
        if rel <= opts.tol {
            // confirm with a true residual
            let tr = norm(&(b - op(&x))) / bnorm;
            matvecs += 1;
            rel = tr;
            if tr <= opts.tol * 10.0 {
                break;
            }
        }
    }
    GmresOutcome { x, relative_residual: rel, matvecs }
}

/// Solve `map(X) = rhs` for a map with a known one-dimensional kernel.
///
/// `null_right` spans the kernel of `map`; `null_left` spans the kernel of its
/// adjoint, i.e. `<null_left, map(X)> = 0` for every `X`. The component of `rhs`
/// outside the range is removed along `null_right`, and the returned solution
/// satisfies `<null_left, X> = 0`.
pub fn solve_singular_linear(
    map: &dyn LinearMap,
    rhs: &CMat,
    null_left: &CMat,
    null_right: &CMat,
) -> Result<CMat> {
    solve_deflated(map, rhs, null_left, null_right, true)
}

/// Deflated solve of a singular `map(X) = rhs` whose range is annihilated by
/// `null_left`. The rank-one term `direction <null_left, X>` restores
/// invertibility; `direction` only needs `<null_left, direction> != 0`. When
/// `direction` is not a kernel vector pass `project = false`: the solution
/// then satisfies `<null_left, X> = 0` through the deflated equation itself.
pub fn solve_deflated(
    map: &dyn LinearMap,
    rhs: &CMat,
    null_left: &CMat,
    direction: &CMat,
    project: bool,
) -> Result<CMat> {
    solve_deflated_from(map, rhs, null_left, direction, project, None)
}

/// [`solve_deflated`] with a starting guess, typically the solution of a
/// nearby problem.
pub fn solve_deflated_from(
    map: &dyn LinearMap,
    rhs: &CMat,
    null_left: &CMat,
    direction: &CMat,
    project: bool,
    guess: Option<&CMat>,
) -> Result<CMat> {
    let (rows, cols) = map.shape();
    let lr = inner(null_left, direction);
    if lr.norm() <= 1e-14 * norm(null_left) * norm(direction) {
        return Err(QgpeError::InvalidInput(
            "left null vector is orthogonal to the deflation direction".into(),
        ));
    }
    let b = project_solution(rhs, null_left, direction, lr);
    let bnorm = norm(&b);
    if bnorm == 0.0 || bnorm <= 1e-14 * norm(rhs) {
        return Ok(CMat::zeros(rows, cols));
    }
    let bhat = b.unscale(bnorm);
    let ab = map.apply(&bhat);
    let mut shift = inner(&bhat, &ab);
    if shift.norm() < 1e-3 * norm(&ab) {
        shift = Complex64::new(-norm(&ab).max(1.0), 0.0);
    }
    let deflated = |x: &CMat| -> CMat { map.apply(x) + direction * (shift * inner(null_left, x) / lr) };
    let precond = |x: &CMat| -> CMat { map.precondition(x) };
    let n = rows * cols;
    let opts = GmresOptions { tol: 1e-13, max_matvec: 50 * n.max(1), restart: n.clamp(1, 120) };
    let x0 = guess.filter(|g| g.shape() == (rows, cols) && g.iter().all(|v| v.is_finite()));
    let out = gmres_from(&deflated, &precond, &b, x0, opts);
    let x = if project { project_solution(&out.x, null_left, direction, lr) } else { out.x };
    let res = norm(&(map.apply(&x) - &b)) / bnorm;
    if !res.is_finite() || res > 1e-8 {
        return Err(QgpeError::IllConditioned { residual: res, iterations: out.matvecs });
    }
    Ok(x)
}

fn project_solution(x: &CMat, null_left: &CMat, null_right: &CMat, lr: Complex64) -> CMat {
    x - null_right * (inner(null_left, x) / lr)
}

/// Solve a nonsingular `map(X) = rhs` by preconditioned GMRES.
pub fn solve_linear(map: &dyn LinearMap, rhs: &CMat, tol: f64) -> Result<CMat> {
    let (rows, cols) = map.shape();
    let n = rows * cols;
    let op = |x: &CMat| map.apply(x);
    let pc = |x: &CMat| map.precondition(x);
    let opts = GmresOptions { tol, max_matvec: 50 * n.max(1), restart: n.clamp(1, 120) };
    let out = gmres(&op, &pc, rhs, opts);
    let bn = norm(rhs);
    if bn == 0.0 {
        return Ok(out.x);
    }
    let res = norm(&(map.apply(&out.x) - rhs)) / bn;
    if !res.is_finite() || res > tol.max(1e-8) {
        return Err(QgpeError::IllConditioned { residual: res, iterations: out.matvecs });
    }
    Ok(out.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dense::{c, eye};

    #[test]
    fn gmres_solves_diagonal_system() {
        let d = CMat::from_fn(3, 3, |i, j| c((1 + i + 3 * j) as f64, 0.0));
        let map = FnMap {
            shape: (3, 3),
            action: |x: &CMat| x.component_mul(&d),
            adjoint: |x: &CMat| x.component_mul(&d),
        };
        let rhs = CMat::from_element(3, 3, c(1.0, 1.0));
        let x = solve_linear(&map, &rhs, 1e-12).unwrap();
        assert!(norm(&(map.apply(&x) - rhs)) < 1e-10);
    }

    #[test]
    fn singular_zero_rhs() {
        let map = FnMap { shape: (2, 2), action: |x: &CMat| x - eye(2) * crate::numerics::dense::trace(x).unscale(2.0), adjoint: |x: &CMat| x - eye(2) * crate::numerics::dense::trace(x).unscale(2.0) };
        let x = solve_singular_linear(&map, &CMat::zeros(2, 2), &eye(2), &eye(2)).unwrap();
        assert_eq!(norm(&x), 0.0);
        let x = solve_singular_linear(&map, &eye(2).scale(3.0), &eye(2), &eye(2)).unwrap();
        assert_eq!(norm(&x), 0.0);
    }
}
