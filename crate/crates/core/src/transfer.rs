//! Transfer generators, reduced density matrices and local observables.

use num_complex::Complex64;

use crate::cmps::{covariant_derivative_finite, left_canonicalize, FiniteCmps, UniformCmps};
use crate::error::{QgpeError, Result};
use crate::numerics::dense::{
    commutator, dense_matrix_of, eigenvalues, eye, hermitian_eigenvalues, hermitian_part, inner, norm,
    null_vector, phase_fix_hermitian, trace, trace_prod, unvectorize, CMat,
};
use crate::numerics::{solve_deflated_from, LinearMap, StateVector, SylvesterSolver};

/// `Q^dag rho + rho Q + R^dag rho R`
pub fn apply_transfer_left(q: &CMat, r: &CMat, rho: &CMat) -> CMat {
    q.adjoint() * rho + rho * q + r.adjoint() * rho * r
}

/// `Q rho + rho Q^dag + R rho R^dag`
pub fn apply_transfer_right(q: &CMat, r: &CMat, rho: &CMat) -> CMat {
    q * rho + rho * q.adjoint() + r * rho * r.adjoint()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// The transfer generator of a uniform state plus a scalar shift,
/// `X -> T(X) + shift X`, with a Sylvester preconditioner built from its
/// `Q`-part.
pub struct TransferMap {
    q: CMat,
    r: CMat,
    side: Side,
    shift: Complex64,
    precond: Option<SylvesterSolver>,
}

impl TransferMap {
    pub fn new(q: &CMat, r: &CMat, side: Side, shift: Complex64) -> Self {
        let d = q.nrows();
        let a = match side {
            Side::Left => q.adjoint() + eye(d) * shift,
            Side::Right => q + eye(d) * shift,
        };
        let b = match side {
            Side::Left => q.clone(),
            Side::Right => q.adjoint(),
        };
        let precond = SylvesterSolver::new(&a, &b).ok();
        TransferMap { q: q.clone(), r: r.clone(), side, shift, precond }
    }
}

impl LinearMap for TransferMap {
    fn shape(&self) -> (usize, usize) {
        (self.q.nrows(), self.q.nrows())
    }

    fn apply(&self, x: &CMat) -> CMat {
        let base = match self.side {
            Side::Left => apply_transfer_left(&self.q, &self.r, x),
            Side::Right => apply_transfer_right(&self.q, &self.r, x),
        };
        base + x * self.shift
    }

    fn apply_adjoint(&self, x: &CMat) -> CMat {
        let base = match self.side {
            Side::Left => apply_transfer_right(&self.q, &self.r, x),
            Side::Right => apply_transfer_left(&self.q, &self.r, x),
        };
        base + x * self.shift.conj()
    }

    fn precondition(&self, x: &CMat) -> CMat {
        match &self.precond {
            Some(s) => s.solve(x).unwrap_or_else(|_| x.clone()),
            None => x.clone(),
        }
    }
}

/// Left and right reduced density matrices, one pair per grid point (a single
/// pair for uniform states), with the normalization `tr(rho_L rho_R)`.
#[derive(Debug, Clone)]
pub struct DensityMatrices {
    pub rho_l: Vec<CMat>,
    pub rho_r: Vec<CMat>,
    pub norm: Vec<f64>,
    pub min_eig_l: Vec<f64>,
    pub min_eig_r: Vec<f64>,
}

impl DensityMatrices {
    fn from_pairs(rho_l: Vec<CMat>, rho_r: Vec<CMat>) -> Self {
        let norm = rho_l.iter().zip(&rho_r).map(|(l, r)| trace_prod(l, r).re).collect();
        let min_eig_l = rho_l.iter().map(|l| hermitian_eigenvalues(l)[0]).collect();
        let min_eig_r = rho_r.iter().map(|r| hermitian_eigenvalues(r)[0]).collect();
        DensityMatrices { rho_l, rho_r, norm, min_eig_l, min_eig_r }
    }

    pub fn len(&self) -> usize {
        self.rho_l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho_l.is_empty()
    }

    /// Largest relative deviation of `tr(rho_L rho_R)` from its mean along the grid.
    pub fn norm_variation(&self) -> f64 {
        let mean = self.norm.iter().sum::<f64>() / self.norm.len() as f64;
        self.norm.iter().map(|n| ((n - mean) / mean).abs()).fold(0.0, f64::max)
    }
}

/// Leading eigenvalue and left fixed point of the transfer generator of an
/// arbitrary uniform state. Dense for `D <= 16`, inverse iteration above.
pub fn dominant_left_fixed_point(state: &UniformCmps) -> Result<(f64, CMat)> {
    let d = state.bond_dim();
    if d <= 16 {
        let m = dense_matrix_of(d, |x| apply_transfer_left(&state.q, &state.r, x));
        let mut ev = eigenvalues(&m)?;
        ev.sort_by(|a, b| b.re.total_cmp(&a.re));
        let lambda = ev[0];
        if ev.len() > 1 && (ev[1] - lambda).norm() < 1e-10 * (1.0 + lambda.norm()) {
            return Err(QgpeError::NonInjective { gap: (ev[1] - lambda).norm() });
        }
        let shifted = &m - CMat::identity(d * d, d * d) * lambda;
        let (v, _) = null_vector(&shifted);
        let rho = phase_fix_hermitian(&unvectorize(&v, d, d));
        Ok((lambda.re, rho))
    } else {
        inverse_iteration_left(state)
    }
}

fn inverse_iteration_left(state: &UniformCmps) -> Result<(f64, CMat)> {
    let d = state.bond_dim();
    let mut x = eye(d).unscale((d as f64).sqrt());
    let mut sigma = inner(&x, &apply_transfer_left(&state.q, &state.r, &x)).re + 1e-3;
    for _ in 0..200 {
        let map = TransferMap::new(&state.q, &state.r, Side::Left, Complex64::new(-sigma, 0.0));
        let y = crate::numerics::solve_linear(&map, &x, 1e-12)?;
        let y = phase_fix_hermitian(&y);
        let yn = norm(&y);
        let next = y.unscale(yn);
        let tx = apply_transfer_left(&state.q, &state.r, &next);
        let lambda = inner(&next, &tx).re;
        let resid = norm(&(tx - next.scale(lambda)));
        x = next;
        if resid < 1e-11 * (1.0 + lambda.abs()) {
            return Ok((lambda, x));
        }
        sigma = lambda + 1e-6 * (1.0 + lambda.abs());
    }
    Err(QgpeError::NoConvergence { steps: 200, residual: f64::NAN })
}

/// Right fixed point of a left-canonical state, normalized to `tr(rho_R) = 1`.
pub fn right_fixed_point_canonical(state: &UniformCmps) -> Result<CMat> {
    right_fixed_point_from(state, None)
}

/// As [`right_fixed_point_canonical`], iterating from a nearby fixed point.
pub fn right_fixed_point_from(state: &UniformCmps, guess: Option<&CMat>) -> Result<CMat> {
    let d = state.bond_dim();
    let id = eye(d);
    let map = TransferMap::new(&state.q, &state.r, Side::Right, Complex64::new(0.0, 0.0));
    // rho = 1/D + delta with tr(delta) = 0; T_R maps into traceless matrices.
    let rhs = -apply_transfer_right(&state.q, &state.r, &id).unscale(d as f64);
    let start = guess.map(|g| {
        let t = trace(g);
        let g = if t.norm() > 0.0 { g.unscale(t.re) } else { g.clone() };
        g - id.unscale(d as f64)
    });
    let delta = solve_deflated_from(&map, &rhs, &id, &id, false, start.as_ref())?;
    let rho = hermitian_part(&(id.unscale(d as f64) + delta));
    let t = trace(&rho).re;
    Ok(rho.unscale(t))
}

/// Fixed-point density matrices of a uniform state, normalized so that
/// `tr(rho_L rho_R) = 1`.
pub fn fixed_point_density(state: &UniformCmps) -> Result<DensityMatrices> {
    fixed_point_density_from(state, None)
}

/// As [`fixed_point_density`]; for a left-canonical state `guess` seeds the
/// iterative solve for `rho_R`.
pub fn fixed_point_density_from(state: &UniformCmps, guess: Option<&CMat>) -> Result<DensityMatrices> {
    let d = state.bond_dim();
    let (rho_l, rho_r) = if state.is_left_canonical() {
        (eye(d), right_fixed_point_from(state, guess)?)
    } else {
        // rho_L = G^-dag G^-1 and rho_R = G rho_R' G^dag for the canonical representative
        let (canon, g) = left_canonicalize(state)?;
        let gi = crate::numerics::dense::inverse(&g)?;
        let rl = gi.adjoint() * &gi;
        let rr = &g * right_fixed_point_canonical(&canon)? * g.adjoint();
        let n = trace_prod(&rl, &rr).re;
        (hermitian_part(&rl), hermitian_part(&rr.unscale(n)))
    };
    let lambda = if state.is_left_canonical() { 0.0 } else { dominant_eigenvalue_estimate(state, &rho_l) };
    let dens = DensityMatrices::from_pairs(vec![rho_l], vec![rho_r]);
    let scale = 1.0 + norm(&state.q) + norm(&state.r).powi(2);
    let res_l = norm(&(apply_transfer_left(&state.q, &state.r, &dens.rho_l[0]) - dens.rho_l[0].scale(lambda)));
    let res_r = norm(&(apply_transfer_right(&state.q, &state.r, &dens.rho_r[0]) - dens.rho_r[0].scale(lambda)));
    if res_l > 1e-9 * scale * norm(&dens.rho_l[0]) || res_r > 1e-9 * scale * norm(&dens.rho_r[0]) {
        return Err(QgpeError::IllConditioned { residual: res_l.max(res_r), iterations: 0 });
    }
    Ok(dens)
}

fn dominant_eigenvalue_estimate(state: &UniformCmps, rho_l: &CMat) -> f64 {
    let t = apply_transfer_left(&state.q, &state.r, rho_l);
    (inner(rho_l, &t) / inner(rho_l, rho_l)).re
}

/// Fourth-order interpolation of a grid function at the midpoint of cell `i`.
fn midpoint(values: &[CMat], i: usize) -> CMat {
    let n = values.len();
    if n < 4 {
        return (&values[i] + &values[i + 1]).scale(0.5);
    }
    let s = 1.0 / 16.0;
    if i == 0 {
        (values[0].scale(5.0) + values[1].scale(15.0) - values[2].scale(5.0) + &values[3]).scale(s)
    } else if i == n - 2 {
        (values[n - 4].clone() - values[n - 3].scale(5.0) + values[n - 2].scale(15.0) + values[n - 1].scale(5.0))
            .scale(s)
    } else {
        (-&values[i - 1] + values[i].scale(9.0) + values[i + 1].scale(9.0) - &values[i + 2]).scale(s)
    }
}

/// Cell midpoints of a grid function (fourth-order accurate).
pub fn midpoints(values: &[CMat]) -> Vec<CMat> {
    (0..values.len() - 1).map(|i| midpoint(values, i)).collect()
}

fn rk4_transfer(
    rho0: &CMat,
    qs: &[CMat],
    rs: &[CMat],
    qm: &[CMat],
    rm: &[CMat],
    dx: f64,
    side: Side,
) -> Result<Vec<CMat>> {
    let n = qs.len();
    let gen = |q: &CMat, r: &CMat, x: &CMat| match side {
        Side::Left => apply_transfer_left(q, r, x),
        Side::Right => apply_transfer_right(q, r, x),
    };
    let mut out = vec![rho0.clone()];
    let mut rho = rho0.clone();
    // Left: forward in x. Right: backward in x, d rho / d(-x) = T_R(rho).
    let order: Vec<usize> = match side {
        Side::Left => (0..n - 1).collect(),
        Side::Right => (0..n - 1).rev().collect(),
    };
    for cell in order {
        let (start, end) = match side {
            Side::Left => (cell, cell + 1),
            Side::Right => (cell + 1, cell),
        };
        let k1 = gen(&qs[start], &rs[start], &rho);
        let k2 = gen(&qm[cell], &rm[cell], &rho.add_scaled(0.5 * dx, &k1));
        let k3 = gen(&qm[cell], &rm[cell], &rho.add_scaled(0.5 * dx, &k2));
        let k4 = gen(&qs[end], &rs[end], &rho.add_scaled(dx, &k3));
        rho = rho + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dx / 6.0);
        rho = hermitian_part(&rho);
        if !rho.is_finite() {
            return Err(QgpeError::NonFiniteDerivative);
        }
        out.push(rho.clone());
    }
    if side == Side::Right {
        out.reverse();
    }
    Ok(out)
}

/// Integrate the density-matrix equations across a finite grid.
pub fn propagate_density(state: &FiniteCmps) -> Result<DensityMatrices> {
    let dx = state.dx();
    let qm = midpoints(&state.qs);
    let rm = midpoints(&state.rs);
    let l0 = &state.v1 * state.v1.adjoint();
    let r0 = &state.v2 * state.v2.adjoint();
    let rho_l = rk4_transfer(&l0, &state.qs, &state.rs, &qm, &rm, dx, Side::Left)?;
    let rho_r = rk4_transfer(&r0, &state.qs, &state.rs, &qm, &rm, dx, Side::Right)?;
    Ok(DensityMatrices::from_pairs(rho_l, rho_r))
}

/// `<n(x)> = tr(rho_L R rho_R R^dag) / tr(rho_L rho_R)`
pub fn density_at(r: &CMat, rho_l: &CMat, rho_r: &CMat) -> f64 {
    let nrm = trace_prod(rho_l, rho_r).re;
    trace_prod(&(rho_l * r), &(rho_r * r.adjoint())).re / nrm
}

/// `<psi^dag psi^dag psi psi>(x)`
pub fn pair_correlation_at(r: &CMat, rho_l: &CMat, rho_r: &CMat) -> f64 {
    let r2 = r * r;
    density_at(&r2, rho_l, rho_r)
}

/// Kinetic energy density `tr(rho_L DR rho_R DR^dag)/norm` for a given covariant derivative.
pub fn kinetic_at(dr: &CMat, rho_l: &CMat, rho_r: &CMat) -> f64 {
    density_at(dr, rho_l, rho_r)
}

/// Local observables of a uniform state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub density: f64,
    pub pair: f64,
    pub kinetic: f64,
    pub energy: f64,
}

impl Observables {
    pub fn compute(dr: &CMat, r: &CMat, rho_l: &CMat, rho_r: &CMat, g: f64, v: f64) -> Self {
        let density = density_at(r, rho_l, rho_r);
        let pair = pair_correlation_at(r, rho_l, rho_r);
        let kinetic = kinetic_at(dr, rho_l, rho_r);
        Observables { density, pair, kinetic, energy: kinetic + v * density + g * pair }
    }
}

pub fn particle_density(state: &UniformCmps, dens: &DensityMatrices) -> f64 {
    density_at(&state.r, &dens.rho_l[0], &dens.rho_r[0])
}

pub fn pair_correlation(state: &UniformCmps, dens: &DensityMatrices) -> f64 {
    pair_correlation_at(&state.r, &dens.rho_l[0], &dens.rho_r[0])
}

/// Energy density `kinetic + v n + g g2` of a uniform state.
pub fn energy_density(state: &UniformCmps, dens: &DensityMatrices, g: f64, v: f64) -> f64 {
    uniform_observables(state, dens, g, v).energy
}

pub fn uniform_observables(state: &UniformCmps, dens: &DensityMatrices, g: f64, v: f64) -> Observables {
    let dr = commutator(&state.q, &state.r);
    Observables::compute(&dr, &state.r, &dens.rho_l[0], &dens.rho_r[0], g, v)
}

/// Observables at every grid point of a finite state; `v` is the potential per point.
pub fn finite_observables(state: &FiniteCmps, dens: &DensityMatrices, g: f64, v: &[f64]) -> Vec<Observables> {
    let dr = covariant_derivative_finite(state);
    (0..state.len())
        .map(|i| Observables::compute(&dr[i], &state.rs[i], &dens.rho_l[i], &dens.rho_r[i], g, v[i]))
        .collect()
}

/// Trapezoidal integral over a uniform grid.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    dx * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// Total energy of a finite state.
pub fn finite_energy(state: &FiniteCmps, dens: &DensityMatrices, g: f64, v: &[f64]) -> f64 {
    let e: Vec<f64> = finite_observables(state, dens, g, v).iter().map(|o| o.energy).collect();
    trapezoid(&e, state.dx())
}

/// Total particle number of a finite state.
pub fn finite_particle_number(state: &FiniteCmps, dens: &DensityMatrices) -> f64 {
    let n: Vec<f64> = (0..state.len())
        .map(|i| density_at(&state.rs[i], &dens.rho_l[i], &dens.rho_r[i]))
        .collect();
    trapezoid(&n, state.dx())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmps::random_uniform_state;
    use crate::numerics::dense::c;

    #[test]
    fn zero_generator_gives_zero() {
        let z = CMat::zeros(2, 2);
        let rho = eye(2);
        assert_eq!(apply_transfer_left(&z, &z, &rho), z);
        assert_eq!(apply_transfer_right(&z, &z, &rho), z);
    }

    #[test]
    fn canonical_identity_is_left_fixed_point() {
        let s = random_uniform_state(4, 2).unwrap();
        assert!(norm(&apply_transfer_left(&s.q, &s.r, &eye(4))) < 1e-14);
    }

    #[test]
    fn scalar_right_map() {
        let q = CMat::from_element(1, 1, c(-0.3, 0.7));
        let r = CMat::from_element(1, 1, c(0.4, -0.2));
        let rho = CMat::from_element(1, 1, c(2.0, 0.0));
        let got = apply_transfer_right(&q, &r, &rho)[(0, 0)];
        let want = (2.0 * -0.3 + 0.2) * 2.0;
        assert!((got - c(want, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn scalar_fixed_points_are_one() {
        let s = random_uniform_state(1, 9).unwrap();
        let dens = fixed_point_density(&s).unwrap();
        assert!((dens.rho_l[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((dens.rho_r[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn nilpotent_r_has_no_pairs() {
        let r = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert_eq!(pair_correlation_at(&r, &eye(2), &eye(2)), 0.0);
    }

    #[test]
    fn mean_field_energy() {
        let phi = c(0.6, 0.3);
        let u = UniformCmps { q: CMat::from_element(1, 1, c(-phi.norm_sqr() / 2.0, 0.0)), r: CMat::from_element(1, 1, phi) };
        let dens = fixed_point_density(&u).unwrap();
        let (g, mu) = (1.3, 0.8);
        let e = energy_density(&u, &dens, g, -mu);
        let n = phi.norm_sqr();
        assert!((e - (-mu * n + g * n * n)).abs() < 1e-14);
    }
}
