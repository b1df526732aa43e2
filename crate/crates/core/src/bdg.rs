//! Linearized flow around a uniform ground state: driven plane-wave response
//! and the excitation spectrum.
//!
//! A perturbation `R0 + e^{i(kx - wt)} R+ + e^{-i(kx - wt)} R-` is carried as
//! the pair `(R+, R-^dag)`, stored side by side in a `D x 2D` matrix.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::linalg::LU;
use nalgebra::Dyn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cmps::{left_canonicalize, UniformCmps};
use crate::error::{QgpeError, Result};
use crate::numerics::dense::{
    c, commutator, dense_matrix_of, eigenvalues, eye, hermitian_eigen, kron, norm, trace, unvectorize, vectorize, CMat, CVec,
};
use crate::numerics::{gmres, solve_linear, GmresOptions, LinearMap};
use crate::tdvp::{hermitian_inverse, qgpe_rhs_uniform, LiebLinigerParams, TimeMode};
use crate::transfer::{apply_transfer_left, fixed_point_density, particle_density, Side, TransferMap};

const INNER_TOL: f64 = 1e-14;

/// A stationary uniform state with everything the linearization needs.
#[derive(Debug, Clone)]
pub struct GroundStateBundle {
    pub state: UniformCmps,
    pub params: LiebLinigerParams,
    pub rho_r: CMat,
    pub f0: CMat,
    pub p0: CMat,
    pub density: f64,
    /// Metric norm of the imaginary-time right-hand side.
    pub stationarity: f64,
    rho_inv: CMat,
    rho_half: CMat,
    rho_inv_half: CMat,
}

impl GroundStateBundle {
    pub fn bond_dim(&self) -> usize {
        self.state.bond_dim()
    }

    /// `k_F = pi rho`
    pub fn k_fermi(&self) -> f64 {
        std::f64::consts::PI * self.density
    }

    /// Relative residual of `Q0^dag F0 + F0 Q0 + R0^dag F0 R0 + S0 = e 1`, where
    /// `e = tr(S0 rho_R)` is the part of the source outside the range of the map.
    pub fn f_residual(&self) -> f64 {
        let (q, r) = (&self.state.q, &self.state.r);
        let rd = r.adjoint();
        let k = commutator(q, r);
        let s = k.adjoint() * &k + (&rd * r).scale(self.params.v0()) + (&rd * &rd * r * r).scale(self.params.g);
        let e = trace(&(&s * &self.rho_r)) / trace(&self.rho_r);
        let d = self.bond_dim();
        norm(&(apply_transfer_left(q, r, &self.f0) + &s - eye(d) * e)) / norm(&s).max(1.0)
    }

    fn unchecked(state: UniformCmps, params: &LiebLinigerParams) -> Result<Self> {
        let dens = fixed_point_density(&state)?;
        let flow = qgpe_rhs_uniform(&state, &dens, params, TimeMode::Imaginary)?;
        let rho_r = dens.rho_r[0].clone();
        Ok(GroundStateBundle {
            density: particle_density(&state, &dens),
            rho_inv: hermitian_inverse(&rho_r),
            rho_half: hermitian_power(&rho_r, 0.5),
            rho_inv_half: hermitian_power(&rho_r, -0.5),
            rho_r,
            f0: flow.f,
            p0: flow.p,
            stationarity: flow.gradient_norm,
            params: params.clone(),
            state,
        })
    }
}

fn hermitian_power(rho: &CMat, p: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(rho);
    let mut s = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        s.column_mut(j).scale_mut(v.max(0.0).powf(p));
    }
    &s * vecs.adjoint()
}

/// Validate stationarity and precompute `rho_R`, `F0` and `P0`.
pub fn prepare_bundle(state: &UniformCmps, params: &LiebLinigerParams) -> Result<GroundStateBundle> {
    params.validate()?;
    let state = if state.is_left_canonical() { state.clone() } else { left_canonicalize(state)?.0 };
    let bundle = GroundStateBundle::unchecked(state, params)?;
    if !(bundle.stationarity <= 1e-8) {
        return Err(QgpeError::NotStationary { residual: bundle.stationarity });
    }
    Ok(bundle)
}

/// First-order quantity `z + e^{i theta} p + e^{-i theta} m` around a uniform `z`.
#[derive(Debug, Clone)]
struct Lin {
    z: CMat,
    p: CMat,
    m: CMat,
}

impl Lin {
    fn constant(z: &CMat) -> Lin {
        let (a, b) = z.shape();
        Lin { z: z.clone(), p: CMat::zeros(a, b), m: CMat::zeros(a, b) }
    }

    fn adjoint(&self) -> Lin {
        Lin { z: self.z.adjoint(), p: self.m.adjoint(), m: self.p.adjoint() }
    }

    fn deriv(&self, k: f64) -> Lin {
        let (a, b) = self.z.shape();
        Lin { z: CMat::zeros(a, b), p: &self.p * c(0.0, k), m: &self.m * c(0.0, -k) }
    }

    fn scale(&self, s: f64) -> Lin {
        Lin { z: self.z.scale(s), p: self.p.scale(s), m: self.m.scale(s) }
    }

    fn comm(&self, o: &Lin) -> Lin {
        &(self * o) - &(o * self)
    }

    /// Inverse given the inverse of the zeroth order.
    fn inverse_with(&self, zi: &CMat) -> Lin {
        Lin { z: zi.clone(), p: -(zi * &self.p * zi), m: -(zi * &self.m * zi) }
    }
}

impl Mul for &Lin {
    type Output = Lin;
    fn mul(self, o: &Lin) -> Lin {
        Lin { z: &self.z * &o.z, p: &self.z * &o.p + &self.p * &o.z, m: &self.z * &o.m + &self.m * &o.z }
    }
}

impl Add for &Lin {
    type Output = Lin;
    fn add(self, o: &Lin) -> Lin {
        Lin { z: &self.z + &o.z, p: &self.p + &o.p, m: &self.m + &o.m }
    }
}

impl Sub for &Lin {
    type Output = Lin;
    fn sub(self, o: &Lin) -> Lin {
        Lin { z: &self.z - &o.z, p: &self.p - &o.p, m: &self.m - &o.m }
    }
}

impl Neg for &Lin {
    type Output = Lin;
    fn neg(self) -> Lin {
        Lin { z: -&self.z, p: -&self.p, m: -&self.m }
    }
}

struct Evaluation {
    out: (CMat, CMat),
    rho: (CMat, CMat),
    f: (CMat, CMat),
}

/// The linearized flow at one wavenumber. `apply` maps `(R+, R-^dag)` to the
/// right-hand side of `w diag(1, -1) u = L u + drive`.
pub struct LinearizedAction<'a> {
    bundle: &'a GroundStateBundle,
    pub k: f64,
    rho_p: ShiftedMap,
    rho_m: ShiftedMap,
    f_p: ShiftedMap,
    f_m: ShiftedMap,
}

/// Build the momentum-`k` action. Fails with `ShiftSingular` at `k = 0`.
pub fn linearized_action(bundle: &GroundStateBundle, k: f64) -> Result<LinearizedAction<'_>> {
    if !k.is_finite() {
        return Err(QgpeError::InvalidInput(format!("wavenumber must be finite, got {k}")));
    }
    if k.abs() < 1e-10 {
        return Err(QgpeError::ShiftSingular { k });
    }
    let (q, r) = (&bundle.state.q, &bundle.state.r);
    Ok(LinearizedAction {
        bundle,
        k,
        rho_p: ShiftedMap::new(TransferMap::new(q, r, Side::Right, c(0.0, k))),
        rho_m: ShiftedMap::new(TransferMap::new(q, r, Side::Right, c(0.0, -k))),
        f_p: ShiftedMap::new(TransferMap::new(q, r, Side::Left, c(0.0, -k))),
        f_m: ShiftedMap::new(TransferMap::new(q, r, Side::Left, c(0.0, k))),
    })
}

/// Largest `D^2` for which shifted transfer maps are factorized densely.
const DENSE_SHIFT_LIMIT: usize = 1024;

/// A shifted transfer map with an LU factorization when it is small enough.
struct ShiftedMap {
    map: TransferMap,
    lu: Option<LU<Complex64, Dyn, Dyn>>,
}

impl ShiftedMap {
    fn new(map: TransferMap) -> Self {
        let d = map.shape().0;
        let lu = (d * d <= DENSE_SHIFT_LIMIT).then(|| dense_matrix_of(d, |x| map.apply(x)).lu());
        ShiftedMap { map, lu }
    }

    fn solve(&self, rhs: &CMat, k: f64) -> Result<CMat> {
        let Some(lu) = &self.lu else {
            return solve_linear(&self.map, rhs, INNER_TOL).map_err(|e| match e {
                QgpeError::IllConditioned { .. } => QgpeError::ShiftSingular { k },
                other => other,
            });
        };
        let d = rhs.nrows();
        let step = |b: &CMat| lu.solve(&vectorize(b)).map(|v| unvectorize(&v, d, d)).ok_or(QgpeError::ShiftSingular { k });
        let x = step(rhs)?;
        // one round of refinement against the matrix-free action
        let x = &x + step(&(rhs - self.map.apply(&x)))?;
        if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(QgpeError::ShiftSingular { k });
        }
        Ok(x)
    }
}

fn split(u: &CMat) -> (CMat, CMat) {
    let d = u.nrows();
    (u.columns(0, d).into_owned(), u.columns(d, d).into_owned())
}

fn join(x: &CMat, y: &CMat) -> CMat {
    let d = x.nrows();
    let mut u = CMat::zeros(d, 2 * d);
    u.columns_mut(0, d).copy_from(x);
    u.columns_mut(d, d).copy_from(y);
    u
}

impl LinearizedAction<'_> {
    fn evaluate(&self, x: &CMat, yh: &CMat, drive: f64) -> Result<Evaluation> {
        let b = self.bundle;
        let (k, g) = (self.k, b.params.g);
        let d = b.bond_dim();
        let (q0, r0) = (&b.state.q, &b.state.r);
        let r = Lin { z: r0.clone(), p: x.clone(), m: yh.adjoint() };
        let rd = r.adjoint();
        let q = Lin { z: q0.clone(), p: -(r0.adjoint() * x), m: -(r0.adjoint() * yh.adjoint()) };
        let half = eye(d) * c(0.5 * drive, 0.0);
        let v = Lin { z: eye(d).scale(b.params.v0()), p: half.clone(), m: half };

        let rho0 = Lin::constant(&b.rho_r);
        let src = &(&(&q * &rho0) + &(&rho0 * &q.adjoint())) + &(&(&r * &rho0) * &rd);
        let rho = Lin {
            z: b.rho_r.clone(),
            p: self.rho_p.solve(&(-&src.p), k)?,
            m: self.rho_m.solve(&(-&src.m), k)?,
        };
        let rho_inv = rho.inverse_with(&b.rho_inv);

        let kin = &r.deriv(k) + &q.comm(&r);
        let dd = &kin.deriv(k) + &q.comm(&kin);
        let kernel = &(&r * &r).scale(g) - &r.comm(&kin);
        let lam_r = &(&rho * &rd) * &rho_inv;
        let e = &(&(-&dd) + &(&v * &r)) + &(&(&rd * &kernel) + &(&kernel * &lam_r));

        let f0 = Lin::constant(&b.f0);
        let s = &(&(&kin.adjoint() * &kin) + &(&v * &(&rd * &r))) + &(&(&rd * &rd) * &(&r * &r)).scale(g);
        let fsrc = &(&(&(&q.adjoint() * &f0) + &(&f0 * &q)) + &(&(&rd * &f0) * &r)) + &s;
        let f = Lin {
            z: b.f0.clone(),
            p: self.f_p.solve(&(-&fsrc.p), k)?,
            m: self.f_m.solve(&(-&fsrc.m), k)?,
        };
        let pt = &f - &(&rd * &kin);
        let y = &e + &pt.comm(&r);
        Ok(Evaluation { out: (y.p, y.m.adjoint()), rho: (rho.p, rho.m), f: (f.p, f.m) })
    }

    /// `L (R+, R-^dag)` without drive.
    pub fn apply(&self, x: &CMat, yh: &CMat) -> Result<(CMat, CMat)> {
        Ok(self.evaluate(x, yh, 0.0)?.out)
    }

    /// Driving term for `v(x, t) = cos(kx - wt)`.
    pub fn drive_vector(&self) -> Result<(CMat, CMat)> {
        let d = self.bundle.bond_dim();
        Ok(self.evaluate(&CMat::zeros(d, d), &CMat::zeros(d, d), 1.0)?.out)
    }

    fn apply_joined(&self, u: &CMat) -> Result<CMat> {
        let (x, y) = split(u);
        let (a, b) = self.apply(&x, &y)?;
        Ok(join(&a, &b))
    }

    /// Dense `2D^2 x 2D^2` matrix of `L` on column-major vectorized `(R+ | R-^dag)`.
    pub fn dense_matrix(&self) -> Result<CMat> {
        let d = self.bundle.bond_dim();
        let n = 2 * d * d;
        let mut m = CMat::zeros(n, n);
        for j in 0..n {
            let mut e = CVec::zeros(n);
            e[j] = c(1.0, 0.0);
            let u = CMat::from_column_slice(d, 2 * d, e.as_slice());
            m.column_mut(j).copy_from(&vectorize(&self.apply_joined(&u)?));
        }
        Ok(m)
    }

    /// Metric applied to a pair: `(R+ rho_R, rho_R R-^dag)`.
    pub fn metric(&self, x: &CMat, yh: &CMat) -> (CMat, CMat) {
        (x * &self.bundle.rho_r, &self.bundle.rho_r * yh)
    }
}

/// Dense Hessian `G L` (metric times linearized flow); Hermitian at a minimum.
/// Only assembled for `D <= 4`.
pub fn hessian_matrix(bundle: &GroundStateBundle, k: f64) -> Result<CMat> {
    let d = bundle.bond_dim();
    if d > 4 {
        return Err(QgpeError::ResourceLimit(format!("dense Hessian only for D <= 4, got {d}")));
    }
    let act = linearized_action(bundle, k)?;
    let l = act.dense_matrix()?;
    let n = 2 * d * d;
    let mut h = CMat::zeros(n, n);
    for j in 0..n {
        let col = CMat::from_column_slice(d, 2 * d, l.column(j).as_slice());
        let (x, y) = split(&col);
        let (gx, gy) = act.metric(&x, &y);
        h.column_mut(j).copy_from(&vectorize(&join(&gx, &gy)));
    }
    Ok(h)
}

/// All eigenvalues of `diag(1, -1) L` at wavenumber `k`, ascending.
///
/// `L = G^-1 H` with the metric `G` and the Hessian `H`. When
/// `K = G^1/2 L G^-1/2` is Hermitian and positive semidefinite the
/// frequencies are the eigenvalues of `K^1/2 diag(1, -1) K^1/2` and come out
/// real; otherwise the non-Hermitian problem is solved directly.
pub fn bdg_eigenvalues(bundle: &GroundStateBundle, k: f64) -> Result<Vec<Complex64>> {
    let d = bundle.bond_dim();
    let mut m = linearized_action(bundle, k)?.dense_matrix()?;
    if let Some(w) = hermitian_frequencies(bundle, &m) {
        return Ok(w);
    }
    let half = d * d;
    for i in half..2 * half {
        m.row_mut(i).neg_mut();
    }
    let mut ev = eigenvalues(&m)?;
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// `K = G^1/2 L G^-1/2` and its square root, when `K` is Hermitian positive semidefinite.
struct HermitianForm {
    root: CMat,
    g_half: CMat,
    g_inv_half: CMat,
}

impl HermitianForm {
    fn new(bundle: &GroundStateBundle, l: &CMat) -> Option<Self> {
        let d = bundle.bond_dim();
        let half = d * d;
        let (vals, vecs) = hermitian_eigen(&bundle.rho_r);
        if !(vals[0] > 0.0) {
            return None;
        }
        let power = |p: f64| {
            let mut s = vecs.clone();
            for (j, v) in vals.iter().enumerate() {
                s.column_mut(j).scale_mut(v.powf(p));
            }
            &s * vecs.adjoint()
        };
        // x -> x S on the first half, y -> S y on the second, column-major
        let metric = |s: &CMat| {
            let mut g = CMat::zeros(2 * half, 2 * half);
            g.view_mut((0, 0), (half, half)).copy_from(&kron(&s.transpose(), &eye(d)));
            g.view_mut((half, half), (half, half)).copy_from(&kron(&eye(d), s));
            g
        };
        let (g_half, g_inv_half) = (metric(&power(0.5)), metric(&power(-0.5)));
        let k = &g_half * l * &g_inv_half;
        let scale = norm(&k);
        if !(norm(&(&k - k.adjoint())) <= 1e-6 * scale) {
            return None;
        }
        let (kv, kvec) = hermitian_eigen(&k);
        if kv[0] < -1e-10 * scale {
            return None;
        }
        let mut root = kvec.clone();
        for (j, v) in kv.iter().enumerate() {
            root.column_mut(j).scale_mut(v.max(0.0).sqrt());
        }
        Some(HermitianForm { root: &root * kvec.adjoint(), g_half, g_inv_half })
    }

    fn signed(&self, m: &CMat) -> CMat {
        let half = m.nrows() / 2;
        let mut out = m.clone();
        for i in half..2 * half {
            out.row_mut(i).neg_mut();
        }
        out
    }

    /// Eigen-decomposition of the Hermitian `K^1/2 diag(1, -1) K^1/2`.
    fn modes(&self) -> (Vec<f64>, CMat) {
        hermitian_eigen(&(&self.root * self.signed(&self.root)))
    }
}

fn hermitian_frequencies(bundle: &GroundStateBundle, l: &CMat) -> Option<Vec<Complex64>> {
    let form = HermitianForm::new(bundle, l)?;
    Some(form.modes().0.into_iter().map(|w| c(w, 0.0)).collect())
}

/// The `n_modes` lowest positive excitation frequencies at `k`, ascending.
pub fn excitation_spectrum(bundle: &GroundStateBundle, k: f64, n_modes: usize) -> Result<Vec<f64>> {
    let mut pos: Vec<f64> = bdg_eigenvalues(bundle, k)?.iter().filter(|w| w.re > 0.0).map(|w| w.re).collect();
    pos.sort_by(f64::total_cmp);
    pos.truncate(n_modes);
    Ok(pos)
}

/// A positive excitation frequency and its weight in the density response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeWeight {
    pub omega: f64,
    /// Residue of the unit-drive density amplitude at `omega`.
    pub weight: f64,
}

/// Positive branches at `k`, ascending, each with its residue in the
/// density response to a unit drive. Needs a positive semidefinite Hessian.
pub fn density_weights(bundle: &GroundStateBundle, k: f64) -> Result<Vec<ModeWeight>> {
    let d = bundle.bond_dim();
    let n = 2 * d * d;
    let act = linearized_action(bundle, k)?;
    let l = act.dense_matrix()?;
    let form = HermitianForm::new(bundle, &l)
        .ok_or_else(|| QgpeError::InvalidInput("Hessian is not positive semidefinite".into()))?;
    let (r0, rho0) = (&bundle.state.r, &bundle.rho_r);
    let r0d = r0.adjoint();
    let mut density = CMat::zeros(1, n);
    for j in 0..n {
        let mut e = CVec::zeros(n);
        e[j] = c(1.0, 0.0);
        let (x, yh) = split(&CMat::from_column_slice(d, 2 * d, e.as_slice()));
        let rho = act.evaluate(&x, &yh, 0.0)?.rho.0;
        density[(0, j)] = trace(&(&x * rho0 * &r0d)) + trace(&(r0 * &rho * &r0d)) + trace(&(r0 * rho0 * &yh));
    }
    let (d1, d2) = act.drive_vector()?;
    let drive = &form.g_half * vectorize(&join(&d1, &d2));
    let (omegas, z) = form.modes();
    let left = &form.root * &z;
    let right = &form.g_inv_half * form.signed(&left);
    let out_of = (&density * &right).transpose();
    let into = form.signed(&left).adjoint() * drive;
    let norm0 = trace(rho0).re;
    Ok(omegas
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(j, &w)| ModeWeight { omega: w, weight: 2.0 * (out_of[j] * into[j]).norm() / (w * norm0) })
        .collect())
}

/// A plane-wave drive `drive * cos(kx - omega t)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResponseProblem {
    pub k: f64,
    pub omega: f64,
    pub drive: f64,
}

#[derive(Debug, Clone)]
pub struct BdGSolution {
    pub k: f64,
    pub omega: f64,
    pub drive: f64,
    pub r_plus: CMat,
    pub r_minus: CMat,
    pub f_plus: CMat,
    pub f_minus: CMat,
    pub rho_plus: CMat,
    pub rho_minus: CMat,
    /// Density amplitude per unit drive.
    pub amplitude: f64,
    /// Relative residual of the linear solve in the metric norm.
    pub residual: f64,
}

/// Solve `(w diag(1, -1) - L) u = drive` by GMRES.
pub fn solve_response(problem: &ResponseProblem, bundle: &GroundStateBundle) -> Result<BdGSolution> {
    let ResponseProblem { k, omega, drive } = *problem;
    if !omega.is_finite() || !drive.is_finite() {
        return Err(QgpeError::InvalidInput("omega and drive must be finite".into()));
    }
    let d = bundle.bond_dim();
    let act = linearized_action(bundle, k)?;
    let (d1, d2) = act.drive_vector()?;
    // solved in v = G^1/2 u, where the metric acts as x -> x rho_R and y -> rho_R y
    let metric = |u: &CMat, s: &CMat| {
        let (x, y) = split(u);
        join(&(x * s), &(s * y))
    };
    let rhs = metric(&join(&d1, &d2).scale(drive), &bundle.rho_half);
    let failure: RefCell<Option<QgpeError>> = RefCell::new(None);
    let op = |v: &CMat| -> CMat {
        let u = metric(v, &bundle.rho_inv_half);
        match act.apply_joined(&u) {
            Ok(lu) => {
                let mut out = -lu;
                out.columns_mut(0, d).zip_apply(&u.columns(0, d), |o, ui| *o += ui * omega);
                out.columns_mut(d, d).zip_apply(&u.columns(d, d), |o, ui| *o -= ui * omega);
                metric(&out, &bundle.rho_half)
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                CMat::zeros(d, 2 * d)
            }
        }
    };
    let n = 2 * d * d;
    let opts = GmresOptions { tol: 1e-12, max_matvec: 4 * n, restart: n };
    let outcome = gmres(&op, &|x: &CMat| x.clone(), &rhs, opts);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let bn = norm(&rhs);
    let residual = if bn == 0.0 { 0.0 } else { norm(&(op(&outcome.x) - &rhs)) / bn };
    if !(residual <= 1e-8) {
        return Err(QgpeError::Resonance { residual });
    }
    let u = metric(&outcome.x, &bundle.rho_inv_half);
    let (x, yh) = split(&u);
    let ev = act.evaluate(&x, &yh, drive)?;
    let mut sol = BdGSolution {
        k,
        omega,
        drive,
        r_minus: yh.adjoint(),
        r_plus: x,
        f_plus: ev.f.0,
        f_minus: ev.f.1,
        rho_plus: ev.rho.0,
        rho_minus: ev.rho.1,
        amplitude: 0.0,
        residual,
    };
    sol.amplitude = density_response_amplitude(&sol, bundle);
    Ok(sol)
}

/// `|dn(k)|` per unit drive, where the density is `n0 + 2 Re(dn e^{i(kx - wt)})`
/// and the reported amplitude is `2 |dn| / drive`.
pub fn density_response_amplitude(solution: &BdGSolution, bundle: &GroundStateBundle) -> f64 {
    if solution.drive == 0.0 {
        return 0.0;
    }
    let (r0, rho0) = (&bundle.state.r, &bundle.rho_r);
    let r0d = r0.adjoint();
    let dn = trace(&(&solution.r_plus * rho0 * &r0d))
        + trace(&(r0 * &solution.rho_plus * &r0d))
        + trace(&(r0 * rho0 * solution.r_minus.adjoint()));
    2.0 * dn.norm() / trace(rho0).re / solution.drive.abs()
}

/// One row of a response sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub k: f64,
    pub amplitude: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

/// Independent unit-drive responses over a list of wavenumbers, in input order.
pub fn sweep_k(bundle: &GroundStateBundle, k_values: &[f64], omega: f64) -> Vec<SweepEntry> {
    k_values
        .par_iter()
        .map(|&k| match solve_response(&ResponseProblem { k, omega, drive: 1.0 }, bundle) {
            Ok(s) => SweepEntry { k, amplitude: Some(s.amplitude), residual: Some(s.residual), error: None },
            Err(e) => SweepEntry { k, amplitude: None, residual: None, error: Some(e.to_string()) },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{bogoliubov_dispersion, mean_field_static_response};
    use crate::tdvp::{ground_state_search, GroundStateOptions};

    fn mean_field_bundle(g: f64, mu: f64) -> GroundStateBundle {
        let n = mu / (2.0 * g);
        let s = UniformCmps::new(CMat::from_element(1, 1, c(-0.5 * n, 0.0)), CMat::from_element(1, 1, c(n.sqrt(), 0.0)))
            .unwrap();
        prepare_bundle(&s, &LiebLinigerParams::new(g, mu)).unwrap()
    }

    fn d2_bundle() -> GroundStateBundle {
        let params = LiebLinigerParams::new(1.0, 1.5);
        let mut opts = GroundStateOptions::new(2, 1e-11, 50_000, 3);
        opts.dt0 = 0.02;
        let run = ground_state_search(&params, &opts, None).unwrap();
        assert!(run.converged, "{}", run.gradient_norm);
        prepare_bundle(&run.state, &params).unwrap()
    }

    #[test]
    fn mean_field_bundle_is_scalar() {
        let b = mean_field_bundle(1.0, 1.0);
        assert!((b.p0[(0, 0)] - b.f0[(0, 0)] * c(0.0, 1.0)).norm() < 1e-14);
        assert!(b.f_residual() < 1e-12);
        assert!((b.density - 0.5).abs() < 1e-14);
    }

    #[test]
    fn non_stationary_state_is_rejected() {
        let s = UniformCmps::new(CMat::from_element(1, 1, c(-0.5, 0.0)), CMat::from_element(1, 1, c(1.0, 0.0))).unwrap();
        let err = prepare_bundle(&s, &LiebLinigerParams::new(1.0, 0.3)).unwrap_err();
        assert!(matches!(err, QgpeError::NotStationary { .. }));
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let b = mean_field_bundle(1.0, 1.0);
        let act = linearized_action(&b, 0.7).unwrap();
        let z = CMat::zeros(1, 1);
        let (a, bb) = act.apply(&z, &z).unwrap();
        assert_eq!(norm(&a) + norm(&bb), 0.0);
        assert!(matches!(linearized_action(&b, 0.0), Err(QgpeError::ShiftSingular { .. })));
    }

    #[test]
    fn scalar_spectrum_is_bogoliubov() {
        let (g, mu) = (0.3, 0.6);
        let b = mean_field_bundle(g, mu);
        for k in [0.05, 0.4, 1.0, 3.0] {
            let w = excitation_spectrum(&b, k, 1).unwrap()[0];
            let exact = bogoliubov_dispersion(k, g, b.density);
            assert!((w - exact).abs() < 1e-8 * exact.max(1.0), "{k}: {w} vs {exact}");
            let all = bdg_eigenvalues(&b, k).unwrap();
            assert!((all[0] + all[1]).norm() < 1e-10);
        }
    }

    #[test]
    fn scalar_static_response_is_mean_field() {
        let (g, mu) = (0.3, 0.6);
        let b = mean_field_bundle(g, mu);
        for k in [0.2, 1.0, 2.5] {
            let s = solve_response(&ResponseProblem { k, omega: 0.0, drive: 1.0 }, &b).unwrap();
            let exact = mean_field_static_response(k, g, b.density);
            assert!((s.amplitude - exact).abs() < 1e-8 * exact, "{k}: {} vs {exact}", s.amplitude);
        }
    }

    #[test]
    fn zero_drive_gives_zero_solution() {
        let b = mean_field_bundle(1.0, 1.0);
        let s = solve_response(&ResponseProblem { k: 0.5, omega: 0.1, drive: 0.0 }, &b).unwrap();
        assert_eq!(norm(&s.r_plus) + norm(&s.r_minus), 0.0);
        assert_eq!(s.amplitude, 0.0);
    }

    #[test]
    fn resonant_drive_is_detected() {
        let (g, mu) = (0.3, 0.6);
        let b = mean_field_bundle(g, mu);
        let k = 0.8;
        let w = bogoliubov_dispersion(k, g, b.density);
        let err = solve_response(&ResponseProblem { k, omega: w, drive: 1.0 }, &b);
        assert!(matches!(err, Err(QgpeError::Resonance { .. })), "{err:?}");
    }

    #[test]
    fn hessian_is_hermitian_at_d2() {
        let b = d2_bundle();
        assert!(b.f_residual() < 1e-10);
        let h = hessian_matrix(&b, 0.9).unwrap();
        let asym = norm(&(&h - h.adjoint())) / norm(&h);
        assert!(asym < 1e-8, "{asym}");
        let w = bdg_eigenvalues(&b, 0.9).unwrap();
        let n = w.len();
        for i in 0..n / 2 {
            assert!((w[i] + w[n - 1 - i]).norm() < 1e-10, "{:?}", w);
        }
    }

    #[test]
    fn density_weight_is_the_response_residue() {
        let b = mean_field_bundle(0.8, 1.2);
        for k in [0.4, 1.5] {
            let modes = density_weights(&b, k).unwrap();
            assert_eq!(modes.len(), 1);
            let w = modes[0].omega;
            assert!((w - bogoliubov_dispersion(k, 0.8, b.density)).abs() < 1e-10);
            let delta = 1e-6 * w;
            let near = solve_response(&ResponseProblem { k, omega: w + delta, drive: 1.0 }, &b).unwrap();
            assert!((near.amplitude * delta - modes[0].weight).abs() < 1e-5 * modes[0].weight, "{modes:?}");
        }
    }

    #[test]
    fn sweep_matches_direct_solves() {
        let b = mean_field_bundle(0.5, 1.0);
        assert!(sweep_k(&b, &[], 0.0).is_empty());
        let ks = [0.3, 0.0, 1.7];
        let table = sweep_k(&b, &ks, 0.0);
        assert!(table[1].error.is_some());
        let direct = solve_response(&ResponseProblem { k: 1.7, omega: 0.0, drive: 1.0 }, &b).unwrap();
        assert_eq!(table[2].amplitude, Some(direct.amplitude));
        let serial: Vec<SweepEntry> = ks.iter().map(|&k| sweep_k(&b, &[k], 0.0).remove(0)).collect();
        assert_eq!(serial, table);
    }
}
