use num_complex::Complex64;

use super::{interaction_kernel, p_tau, LiebLinigerParams, TimeMode};
use crate::cmps::{covariant_derivative_finite, finite_difference, second_difference, BoundaryCondition, FiniteCmps};
use crate::error::{QgpeError, Result};
use crate::numerics::dense::{commutator, hermitian_eigenvalues, hermitian_part, regularized_inverse, trace, CMat, CVec};
use crate::numerics::StateVector;
use crate::transfer::{apply_transfer_left, finite_energy, midpoints, propagate_density, DensityMatrices};

/// Time derivative of a finite state.
#[derive(Debug, Clone)]
pub struct FiniteFlow {
    pub q_dot: Vec<CMat>,
    pub r_dot: Vec<CMat>,
    /// Time derivative of `v1` (the conjugate of the derivative of `v1^dag`).
    pub v1_dot: CVec,
    pub v2_dot: CVec,
    /// Hermitian generator of the `R` update at every point.
    pub y: Vec<CMat>,
    pub f: Vec<CMat>,
    pub p: Vec<CMat>,
    /// Interior points where a density matrix fell below the regularization floor.
    pub floor_hits: usize,
}

fn sources(state: &FiniteCmps, drs: &[CMat], v: &[f64], g: f64) -> Vec<CMat> {
    state
        .rs
        .iter()
        .zip(drs)
        .zip(v)
        .map(|((r, dr), vi)| {
            let rd = r.adjoint();
            dr.adjoint() * dr + (&rd * r).scale(*vi) + (&rd * &rd * r * r).scale(g)
        })
        .collect()
}

/// `F(x)` from `dF/dx = Q^dag F + F Q + R^dag F R + S`, `F(x1) = 0`, by RK4 on the grid.
pub fn solve_f_finite(state: &FiniteCmps, params: &LiebLinigerParams) -> Result<Vec<CMat>> {
    let v = params.v_profile(state.len())?;
    let drs = covariant_derivative_finite(state);
    integrate_f(state, &sources(state, &drs, &v, params.g))
}

fn integrate_f(state: &FiniteCmps, s: &[CMat]) -> Result<Vec<CMat>> {
    let n = state.len();
    let d = state.bond_dim();
    let dx = state.dx();
    let qm = midpoints(&state.qs);
    let rm = midpoints(&state.rs);
    let sm = midpoints(s);
    let gen = |q: &CMat, r: &CMat, src: &CMat, f: &CMat| apply_transfer_left(q, r, f) + src;
    let mut f = CMat::zeros(d, d);
    let mut out = Vec::with_capacity(n);
    out.push(f.clone());
    for i in 0..n - 1 {
        let k1 = gen(&state.qs[i], &state.rs[i], &s[i], &f);
        let k2 = gen(&qm[i], &rm[i], &sm[i], &f.add_scaled(0.5 * dx, &k1));
        let k3 = gen(&qm[i], &rm[i], &sm[i], &f.add_scaled(0.5 * dx, &k2));
        let k4 = gen(&state.qs[i + 1], &state.rs[i + 1], &s[i + 1], &f.add_scaled(dx, &k3));
        f = hermitian_part(&(f + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dx / 6.0)));
        if !f.is_finite() {
            return Err(QgpeError::NonFiniteDerivative);
        }
        out.push(f.clone());
    }
    Ok(out)
}

fn regularized(rho: &CMat) -> (CMat, bool) {
    let d = rho.nrows() as f64;
    let eps = 1e-10 * trace(rho).re.abs() / d;
    let min = hermitian_eigenvalues(rho)[0];
    (regularized_inverse(rho, eps), min < eps)
}

/// Right-hand side of the covariant flow on a finite grid, including the
/// boundary vectors. Under Dirichlet conditions the boundary rows of `R` are
/// frozen.
pub fn qgpe_rhs_finite(
    state: &FiniteCmps,
    dens: &DensityMatrices,
    params: &LiebLinigerParams,
    mode: TimeMode,
) -> Result<FiniteFlow> {
    let n = state.len();
    if dens.len() != n {
        return Err(QgpeError::DimensionMismatch(format!("densities have {} points, grid has {n}", dens.len())));
    }
    if n < 4 {
        return Err(QgpeError::InvalidInput("finite flow needs at least four grid points".into()));
    }
    let dx = state.dx();
    let v = params.v_profile(n)?;
    let g = params.g;
    let drs = covariant_derivative_finite(state);
    let dq = finite_difference(&state.qs, dx);
    let dr_plain = finite_difference(&state.rs, dx);
    let d2r = second_difference(&state.rs, dx);
    let s = sources(state, &drs, &v, g);
    let fs = integrate_f(state, &s)?;

    let mut floor_hits = 0;
    let mut y = Vec::with_capacity(n);
    let mut pts = Vec::with_capacity(n);
    let mut vq = Vec::with_capacity(n);
    for i in 0..n {
        let (q, r) = (&state.qs[i], &state.rs[i]);
        let rd = r.adjoint();
        let (il, hit_l) = regularized(&dens.rho_l[i]);
        let (ir, hit_r) = regularized(&dens.rho_r[i]);
        if (hit_l || hit_r) && i > 0 && i < n - 1 {
            floor_hits += 1;
        }
        let lam_l = &il * &rd * &dens.rho_l[i];
        let lam_r = &dens.rho_r[i] * &rd * &ir;
        let b = interaction_kernel(r, &drs[i], g);
        let dd = &d2r[i] + commutator(&dq[i], r) + commutator(q, &dr_plain[i]).scale(2.0) + commutator(q, &commutator(q, r));
        let e = -dd + r.scale(v[i]) + &lam_l * &b + &b * &lam_r;
        let pt = p_tau(r, &drs[i], &fs[i]);
        y.push(e + commutator(&pt, r));
        vq.push(-(&lam_l * &b * &lam_r));
        pts.push(pt);
    }
    if floor_hits * 10 > n - 2 {
        let worst = (1..n - 1)
            .map(|i| hermitian_eigenvalues(&dens.rho_l[i])[0].min(hermitian_eigenvalues(&dens.rho_r[i])[0]))
            .fold(f64::INFINITY, f64::min);
        return Err(QgpeError::SingularDensity { min_eigenvalue: worst });
    }
    let dpt = finite_difference(&pts, dx);
    let factor = mode.factor();
    let mut r_dot: Vec<CMat> = y.iter().map(|yi| yi * factor).collect();
    let q_dot: Vec<CMat> = (0..n)
        .map(|i| (&vq[i] - &dpt[i] - commutator(&state.qs[i], &pts[i])) * factor)
        .collect();

    let (k1, k2) = (&drs[0], &drs[n - 1]);
    let (ca, cb) = match state.bc {
        BoundaryCondition::Dirichlet { a, b } => {
            let d = state.bond_dim();
            r_dot[0] = CMat::zeros(d, d);
            r_dot[n - 1] = CMat::zeros(d, d);
            (a, b)
        }
        BoundaryCondition::Neumann => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
    };
    // d(v1^dag)/dt = factor z1^dag with z1^dag = -conj(a) v1^dag D_x R(x1) - v1^dag P_tau(x1)
    let z1 = -(k1.adjoint() * &state.v1) * ca - pts[0].adjoint() * &state.v1;
    let v1_dot = z1 * factor.conj();
    let z2 = (k2 * &state.v2) * cb.conj() + &pts[n - 1] * &state.v2;
    let v2_dot = z2 * factor;

    let i = Complex64::new(0.0, 1.0);
    let p = pts.iter().map(|pt| pt * i).collect();
    Ok(FiniteFlow { q_dot, r_dot, v1_dot, v2_dot, y, f: fs, p, floor_hits })
}

/// Energy of a finite state, integrated over the grid.
pub fn finite_energy_of(state: &FiniteCmps, params: &LiebLinigerParams) -> Result<f64> {
    let dens = propagate_density(state)?;
    let v = params.v_profile(state.len())?;
    Ok(finite_energy(state, &dens, params.g, &v))
}

/// The boundary-vector part of the flow alone, for inspection.
pub fn boundary_flow(flow: &FiniteFlow) -> (CVec, CVec) {
    (flow.v1_dot.clone(), flow.v2_dot.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmps::{random_uniform_state, unit_vector, UniformCmps};
    use crate::numerics::dense::{c, norm};

    fn free_particle_state(n: usize) -> FiniteCmps {
        let qs: Vec<CMat> = (0..n).map(|_| CMat::from_element(1, 1, c(-0.1, 0.0))).collect();
        let rs: Vec<CMat> = (0..n)
            .map(|i| {
                let x = i as f64 / (n - 1) as f64;
                CMat::from_element(1, 1, c((2.0 * x).cos(), (2.0 * x).sin() * 0.5))
            })
            .collect();
        FiniteCmps::new(0.0, 1.0, qs, rs, unit_vector(1, 0), unit_vector(1, 0), BoundaryCondition::Neumann).unwrap()
    }

    #[test]
    fn scalar_free_flow_is_schrodinger() {
        let s = free_particle_state(41);
        let p = LiebLinigerParams::new(0.0, 0.0);
        let dens = propagate_density(&s).unwrap();
        let flow = qgpe_rhs_finite(&s, &dens, &p, TimeMode::Real).unwrap();
        let lap = second_difference(&s.rs, s.dx());
        for i in 1..40 {
            let want = lap[i][(0, 0)] * c(0.0, 1.0);
            assert!((flow.r_dot[i][(0, 0)] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn neumann_uniform_bulk_matches_uniform_rhs() {
        let u = random_uniform_state(2, 3).unwrap();
        let s = FiniteCmps::from_uniform(&u, 0.0, 2.0, 81, unit_vector(2, 0), unit_vector(2, 1), BoundaryCondition::Neumann)
            .unwrap();
        let p = LiebLinigerParams::new(1.0, 1.0);
        let dens = propagate_density(&s).unwrap();
        let flow = qgpe_rhs_finite(&s, &dens, &p, TimeMode::Imaginary).unwrap();
        assert!(flow.y.iter().all(|y| y.is_finite()));
        assert!(flow.f.iter().all(|f| norm(&(f - f.adjoint())) < 1e-12));
    }

    #[test]
    fn dirichlet_rows_frozen() {
        let u = UniformCmps::new(CMat::from_element(1, 1, c(-0.5, 0.0)), CMat::from_element(1, 1, c(1.0, 0.0))).unwrap();
        let s = FiniteCmps::from_uniform(
            &u,
            0.0,
            1.0,
            21,
            unit_vector(1, 0),
            unit_vector(1, 0),
            BoundaryCondition::Dirichlet { a: c(0.0, 0.0), b: c(0.0, 0.0) },
        )
        .unwrap();
        let dens = propagate_density(&s).unwrap();
        let flow = qgpe_rhs_finite(&s, &dens, &LiebLinigerParams::new(1.0, 1.0), TimeMode::Imaginary).unwrap();
        assert_eq!(flow.r_dot[0][(0, 0)], c(0.0, 0.0));
        assert_eq!(flow.r_dot[20][(0, 0)], c(0.0, 0.0));
    }
}
