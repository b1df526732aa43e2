use num_complex::Complex64;

use super::{interaction_kernel, p_tau, LiebLinigerParams, TimeMode};
use crate::cmps::UniformCmps;
use crate::error::{QgpeError, Result};
use crate::numerics::dense::{commutator, eye, hermitian_eigen, hermitian_part, norm, trace_prod, CMat};
use crate::numerics::solve_deflated_from;
use crate::transfer::{energy_density, fixed_point_density, DensityMatrices, Side, TransferMap};

/// Time derivative of a uniform left-canonical state together with the
/// pieces it was assembled from.
#[derive(Debug, Clone)]
pub struct UniformFlow {
    pub q_dot: CMat,
    pub r_dot: CMat,
    /// Hermitian generator `Y`: `dR/dt = -i Y` in real time, `dR/dtau = -Y` in imaginary time.
    pub y: CMat,
    pub f: CMat,
    pub p: CMat,
    /// Metric norm `sqrt(tr(Y rho_R Y^dag))` of the imaginary-time update.
    pub gradient_norm: f64,
}

fn source_term(state: &UniformCmps, dr: &CMat, params: &LiebLinigerParams) -> CMat {
    let r = &state.r;
    let rd = r.adjoint();
    dr.adjoint() * dr + (&rd * r).scale(params.v0()) + (&rd * &rd * r * r).scale(params.g)
}

/// Hermitian `F` solving `-(Q^dag F + F Q + R^dag F R) = S` with `tr(F rho_R) = 0`.
pub fn solve_f(state: &UniformCmps, dens: &DensityMatrices, params: &LiebLinigerParams) -> Result<CMat> {
    solve_f_from(state, dens, params, None)
}

fn solve_f_from(state: &UniformCmps, dens: &DensityMatrices, params: &LiebLinigerParams, guess: Option<&CMat>) -> Result<CMat> {
    let d = state.bond_dim();
    let dr = commutator(&state.q, &state.r);
    let s = source_term(state, &dr, params);
    let map = TransferMap::new(&state.q, &state.r, Side::Left, Complex64::new(0.0, 0.0));
    let f = solve_deflated_from(&map, &(-s), &dens.rho_r[0], &eye(d), true, guess)?;
    Ok(hermitian_part(&f))
}

/// Inverse of a Hermitian positive definite matrix through its eigenbasis.
pub(crate) fn hermitian_inverse(rho: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(rho);
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*v);
    }
    &scaled * vecs.adjoint()
}

/// Right-hand side of the uniform flow for a left-canonical state.
pub fn qgpe_rhs_uniform(
    state: &UniformCmps,
    dens: &DensityMatrices,
    params: &LiebLinigerParams,
    mode: TimeMode,
) -> Result<UniformFlow> {
    qgpe_rhs_uniform_from(state, dens, params, mode, None)
}

/// As [`qgpe_rhs_uniform`], seeding the `F` solve with `f_guess`.
pub fn qgpe_rhs_uniform_from(
    state: &UniformCmps,
    dens: &DensityMatrices,
    params: &LiebLinigerParams,
    mode: TimeMode,
    f_guess: Option<&CMat>,
) -> Result<UniformFlow> {
    if !state.is_left_canonical() {
        return Err(QgpeError::InvalidInput(format!(
            "state is not left-canonical (residual {:e})",
            state.canonical_residual()
        )));
    }
    let rho_r = &dens.rho_r[0];
    let min_eig = dens.min_eig_r[0];
    if !(min_eig >= 1e-12 * norm(rho_r)) {
        return Err(QgpeError::SingularDensity { min_eigenvalue: min_eig });
    }
    let (q, r) = (&state.q, &state.r);
    let rd = r.adjoint();
    let dr = commutator(q, r);
    let b = interaction_kernel(r, &dr, params.g);
    let lam_r = rho_r * &rd * hermitian_inverse(rho_r);
    let w = -commutator(q, &dr) + r.scale(params.v0()) + &rd * &b + &b * lam_r;
    let f = solve_f_from(state, dens, params, f_guess)?;
    let pt = p_tau(r, &dr, &f);
    let y = w + commutator(&pt, r);
    let r_dot = &y * mode.factor();
    let q_dot = -(&rd * &r_dot);
    let gradient_norm = trace_prod(&(&y * rho_r), &y.adjoint()).re.max(0.0).sqrt();
    let p = &pt * Complex64::new(0.0, 1.0);
    Ok(UniformFlow { q_dot, r_dot, y, f, p, gradient_norm })
}

/// Right-hand side evaluated on the left-canonical retraction of `state`,
/// which only resets the Hermitian part of `Q`. The retraction is the identity
/// on canonical states and makes the field smooth off the canonical manifold,
/// as needed by the intermediate stages of explicit integrators.
pub fn rhs_uniform_retracted(
    state: &UniformCmps,
    params: &LiebLinigerParams,
    mode: TimeMode,
) -> Result<(UniformFlow, UniformCmps, DensityMatrices)> {
    let mut canon = state.clone();
    canon.restore_left_canonical();
    let dens = fixed_point_density(&canon)?;
    let flow = qgpe_rhs_uniform(&canon, &dens, params, mode)?;
    Ok((flow, canon, dens))
}

/// Energy density of an arbitrary uniform state.
pub fn uniform_energy(state: &UniformCmps, params: &LiebLinigerParams) -> Result<f64> {
    let dens = fixed_point_density(state)?;
    Ok(energy_density(state, &dens, params.g, params.v0()))
}

/// Metric norm of the imaginary-time update at a left-canonical state.
pub fn energy_gradient_norm(state: &UniformCmps, params: &LiebLinigerParams) -> Result<f64> {
    let dens = fixed_point_density(state)?;
    Ok(qgpe_rhs_uniform(state, &dens, params, TimeMode::Imaginary)?.gradient_norm)
}
