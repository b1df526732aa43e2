//! Brute-force check of continuum observables: the cMPS is discretized into an
//! ordinary matrix product state with a truncated on-site Fock space and
//! contracted exactly.

use num_complex::Complex64;
use serde::Serialize;

use crate::cmps::{Cmps, FiniteCmps, UniformCmps};
use crate::error::{QgpeError, Result};
use crate::numerics::dense::{dense_matrix_of, eigenvalues, eye, null_vector, phase_fix_hermitian, trace_prod, unvectorize, vectorize, CMat};

/// Local observables of the lattice model, converted to continuum units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeObservables {
    pub density: f64,
    pub pair: f64,
    pub kinetic: f64,
}

impl LatticeObservables {
    pub fn energy(&self, g: f64, v: f64) -> f64 {
        self.kinetic + v * self.density + g * self.pair
    }
}

/// The lattice spacings used for extrapolation.
pub const LATTICE_SPACINGS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

fn check_limits(d: usize, cutoff: usize, sites: Option<f64>) -> Result<()> {
    if d > 4 {
        return Err(QgpeError::ResourceLimit(format!("bond dimension {d} > 4")));
    }
    if cutoff > 3 || cutoff == 0 {
        return Err(QgpeError::ResourceLimit(format!("Fock cutoff {cutoff} outside 1..=3")));
    }
    if let Some(s) = sites {
        if s > 64.0 + 1e-9 {
            return Err(QgpeError::ResourceLimit(format!("length/dx = {s} > 64")));
        }
    }
    Ok(())
}

/// Site tensors `A^0 = 1 + dx Q`, `A^n = dx^(n/2) R^n / sqrt(n!)`.
pub fn site_tensors(q: &CMat, r: &CMat, dx: f64, cutoff: usize) -> Vec<CMat> {
    let d = q.nrows();
    let mut out = vec![eye(d) + q.scale(dx)];
    let mut rn = eye(d);
    let mut fact = 1.0;
    for n in 1..=cutoff {
        rn = &rn * r;
        fact *= n as f64;
        out.push(rn.scale(dx.powf(n as f64 / 2.0) / fact.sqrt()));
    }
    out
}

/// `X -> sum_{n,m} <m|O|n> K^n X B^m^dag` for an on-site operator with matrix
/// elements `op(m, n)`; `K` are ket tensors and `B` bra tensors.
fn op_transfer(ket: &[CMat], bra: &[CMat], op: impl Fn(usize, usize) -> f64, x: &CMat) -> CMat {
    let mut out = CMat::zeros(x.nrows(), x.ncols());
    for (n, kn) in ket.iter().enumerate() {
        for (m, bm) in bra.iter().enumerate() {
            let o = op(m, n);
            if o != 0.0 {
                out += (kn * x * bm.adjoint()).scale(o);
            }
        }
    }
    out
}

fn ident(m: usize, n: usize) -> f64 {
    if m == n {
        1.0
    } else {
        0.0
    }
}

fn number(m: usize, n: usize) -> f64 {
    if m == n {
        n as f64
    } else {
        0.0
    }
}

fn pair_op(m: usize, n: usize) -> f64 {
    if m == n {
        (n * n.saturating_sub(1)) as f64
    } else {
        0.0
    }
}

fn annihilate(m: usize, n: usize) -> f64 {
    if n >= 1 && m == n - 1 {
        (n as f64).sqrt()
    } else {
        0.0
    }
}

fn create(m: usize, n: usize) -> f64 {
    if m == n + 1 {
        (m as f64).sqrt()
    } else {
        0.0
    }
}

struct UniformChain {
    a: Vec<CMat>,
    eta: Complex64,
    l: CMat,
    r: CMat,
    d: usize,
}

impl UniformChain {
    fn new(state: &UniformCmps, dx: f64, cutoff: usize) -> Result<Self> {
        let d = state.bond_dim();
        let a = site_tensors(&state.q, &state.r, dx, cutoff);
        let right = dense_matrix_of(d, |x| op_transfer(&a, &a, ident, x));
        let left = dense_matrix_of(d, |x| op_transfer(&a.iter().map(|m| m.adjoint()).collect::<Vec<_>>(), &a.iter().map(|m| m.adjoint()).collect::<Vec<_>>(), ident, x));
        let mut ev = eigenvalues(&right)?;
        ev.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
        let eta = ev[0];
        let n = d * d;
        let (rv, _) = null_vector(&(&right - CMat::identity(n, n) * eta));
        let (lv, _) = null_vector(&(&left - CMat::identity(n, n) * eta.conj()));
        let r = phase_fix_hermitian(&unvectorize(&rv, d, d));
        let l = phase_fix_hermitian(&unvectorize(&lv, d, d));
        Ok(UniformChain { a, eta, l, r, d })
    }

    fn norm(&self) -> Complex64 {
        trace_prod(&self.l, &self.r)
    }

    fn transfer(&self, x: &CMat) -> CMat {
        op_transfer(&self.a, &self.a, ident, x)
    }

    fn one_site(&self, op: impl Fn(usize, usize) -> f64) -> f64 {
        let v = trace_prod(&self.l, &op_transfer(&self.a, &self.a, op, &self.r)) / (self.eta * self.norm());
        v.re
    }

    fn two_site(&self, left: impl Fn(usize, usize) -> f64, right: impl Fn(usize, usize) -> f64) -> f64 {
        let inner = op_transfer(&self.a, &self.a, right, &self.r);
        let outer = op_transfer(&self.a, &self.a, left, &inner);
        (trace_prod(&self.l, &outer) / (self.eta * self.eta * self.norm())).re
    }

    fn observables(&self, dx: f64) -> LatticeObservables {
        let n = self.one_site(number);
        let pair = self.one_site(pair_op);
        let hop = self.two_site(create, annihilate) + self.two_site(annihilate, create);
        LatticeObservables { density: n / dx, pair: pair / (dx * dx), kinetic: (2.0 * n - hop) / (dx * dx * dx) }
    }

    /// `(1 - E/eta + P)^-1 - P` restricted to the connected part, with `P` the
    /// projector on the dominant eigenvector.
    fn connected_sum(&self, x: &CMat) -> Result<CMat> {
        let d = self.d;
        let nrm = self.norm();
        let proj = |y: &CMat| &self.r * (trace_prod(&self.l, y) / nrm);
        let m = dense_matrix_of(d, |y| y - self.transfer(y) / self.eta + proj(y));
        let rhs = vectorize(x);
        let sol = m.lu().solve(&rhs).ok_or(QgpeError::SingularSpectrum { gap: 0.0 })?;
        let sol = unvectorize(&sol, d, d);
        Ok(&sol - proj(x))
    }
}

/// Tangent tensors `dA^n` for a variation `(V, W)` of `(Q, R)`.
pub fn tangent_tensors(r: &CMat, v: &CMat, w: &CMat, dx: f64, cutoff: usize) -> Vec<CMat> {
    let d = r.nrows();
    let mut out = vec![v.scale(dx)];
    // derivative of R^n is sum_k R^k W R^(n-1-k)
    let mut powers = vec![eye(d)];
    for n in 1..=cutoff {
        powers.push(&powers[n - 1] * r);
    }
    let mut fact = 1.0;
    for n in 1..=cutoff {
        fact *= n as f64;
        let mut dn = CMat::zeros(d, d);
        for k in 0..n {
            dn += &powers[k] * w * &powers[n - 1 - k];
        }
        out.push(dn.scale(dx.powf(n as f64 / 2.0) / fact.sqrt()));
    }
    out
}

/// Observables of the lattice-discretized state at one spacing. Uniform
/// states are treated on the infinite chain; finite states on the chain
/// spanning the box, returning the values at the site closest to the centre.
pub fn lattice_discretization_oracle(
    state: &Cmps,
    dx: f64,
    fock_cutoff: usize,
    length: f64,
) -> Result<LatticeObservables> {
    if !(dx > 0.0) {
        return Err(QgpeError::InvalidInput("dx must be positive".into()));
    }
    match state {
        Cmps::Uniform(u) => {
            check_limits(u.bond_dim(), fock_cutoff, Some(length / dx))?;
            Ok(UniformChain::new(u, dx, fock_cutoff)?.observables(dx))
        }
        Cmps::Finite(f) => {
            let len = f.x2 - f.x1;
            check_limits(f.bond_dim(), fock_cutoff, Some(len / dx))?;
            let profile = finite_chain_profile(f, dx, fock_cutoff)?;
            Ok(profile[profile.len() / 2])
        }
    }
}

fn interpolate(values: &[CMat], x1: f64, h: f64, x: f64) -> CMat {
    let n = values.len();
    let s = ((x - x1) / h).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    let t = s - i as f64;
    values[i].scale(1.0 - t) + values[i + 1].scale(t)
}

/// Site-resolved observables of a finite state on the lattice `x1, x1 + dx, ...`.
pub fn finite_chain_profile(state: &FiniteCmps, dx: f64, cutoff: usize) -> Result<Vec<LatticeObservables>> {
    let len = state.x2 - state.x1;
    check_limits(state.bond_dim(), cutoff, Some(len / dx))?;
    let sites = (len / dx).round() as usize;
    let h = state.dx();
    let tensors: Vec<Vec<CMat>> = (0..sites)
        .map(|j| {
            let x = state.x1 + (j as f64 + 0.5) * dx;
            site_tensors(&interpolate(&state.qs, state.x1, h, x), &interpolate(&state.rs, state.x1, h, x), dx, cutoff)
        })
        .collect();
    // left environments from v1 v1^dag, right environments from v2 v2^dag
    let mut lefts = vec![&state.v1 * state.v1.adjoint()];
    for a in &tensors {
        let ad: Vec<CMat> = a.iter().map(|m| m.adjoint()).collect();
        let next = op_transfer(&ad, &ad, ident, lefts.last().unwrap());
        lefts.push(next);
    }
    let mut rights = vec![&state.v2 * state.v2.adjoint()];
    for a in tensors.iter().rev() {
        let next = op_transfer(a, a, ident, rights.last().unwrap());
        rights.push(next);
    }
    rights.reverse();
    let total = trace_prod(&lefts[0], &rights[0]).re;
    let mut out = Vec::with_capacity(sites);
    for j in 0..sites {
        let a = &tensors[j];
        let one = |op: fn(usize, usize) -> f64| trace_prod(&lefts[j], &op_transfer(a, a, op, &rights[j + 1])).re / total;
        let n = one(number);
        let pair = one(pair_op);
        let kinetic = if j + 1 < sites {
            let b = &tensors[j + 1];
            let two = |lo: fn(usize, usize) -> f64, ro: fn(usize, usize) -> f64| {
                let inner = op_transfer(b, b, ro, &rights[j + 2]);
                trace_prod(&lefts[j], &op_transfer(a, a, lo, &inner)).re / total
            };
            let nb = trace_prod(&lefts[j + 1], &op_transfer(b, b, number, &rights[j + 2])).re / total;
            (n + nb - two(create, annihilate) - two(annihilate, create)) / (dx * dx * dx)
        } else {
            f64::NAN
        };
        out.push(LatticeObservables { density: n / dx, pair: pair / (dx * dx), kinetic });
    }
    Ok(out)
}

/// Three-point Richardson extrapolation for spacings `h, h/2, h/4`,
/// cancelling the first- and second-order terms.
pub fn richardson3(f_h: f64, f_h2: f64, f_h4: f64) -> f64 {
    (8.0 * f_h4 - 6.0 * f_h2 + f_h) / 3.0
}

/// Limit of values sampled at `h, h/2, h/4, ...`, cancelling one more order
/// of `h` per extra sample.
pub fn richardson(values: &[f64]) -> f64 {
    let mut f = values.to_vec();
    for m in 1..f.len() {
        let p = 2f64.powi(m as i32);
        for i in (m..f.len()).rev() {
            f[i] = (p * f[i] - f[i - 1]) / (p - 1.0);
        }
    }
    f.last().copied().unwrap_or(f64::NAN)
}

/// Uniform observables extrapolated to the continuum from [`LATTICE_SPACINGS`].
pub fn lattice_extrapolated(state: &UniformCmps, fock_cutoff: usize) -> Result<LatticeObservables> {
    lattice_extrapolated_over(state, fock_cutoff, &LATTICE_SPACINGS)
}

/// Same as [`lattice_extrapolated`] for any halving sequence of spacings.
pub fn lattice_extrapolated_over(state: &UniformCmps, fock_cutoff: usize, spacings: &[f64]) -> Result<LatticeObservables> {
    for w in spacings.windows(2) {
        if (w[1] * 2.0 - w[0]).abs() > 1e-12 * w[0] {
            return Err(QgpeError::InvalidInput("spacings must halve at every step".into()));
        }
    }
    let cm = Cmps::Uniform(state.clone());
    let vals: Vec<LatticeObservables> = spacings
        .iter()
        .map(|&dx| lattice_discretization_oracle(&cm, dx, fock_cutoff, 0.0))
        .collect::<Result<_>>()?;
    let ex = |f: fn(&LatticeObservables) -> f64| richardson(&vals.iter().map(f).collect::<Vec<_>>());
    Ok(LatticeObservables { density: ex(|o| o.density), pair: ex(|o| o.pair), kinetic: ex(|o| o.kinetic) })
}

/// Per-length overlap of two uniform tangent vectors on the lattice chain,
/// with the disconnected part removed.
pub fn lattice_tangent_overlap(
    state: &UniformCmps,
    tv1: (&CMat, &CMat),
    tv2: (&CMat, &CMat),
    dx: f64,
    fock_cutoff: usize,
) -> Result<Complex64> {
    check_limits(state.bond_dim(), fock_cutoff, None)?;
    let chain = UniformChain::new(state, dx, fock_cutoff)?;
    let b1 = tangent_tensors(&state.r, tv1.0, tv1.1, dx, fock_cutoff);
    let b2 = tangent_tensors(&state.r, tv2.0, tv2.1, dx, fock_cutoff);
    let a = &chain.a;
    let eta = chain.eta;
    let nrm = chain.norm();
    let local = trace_prod(&chain.l, &op_transfer(&b2, &b1, ident, &chain.r)) / eta;
    // ket insertion left of the bra insertion, and the reverse
    let right_b1 = chain.connected_sum(&(op_transfer(a, &b1, ident, &chain.r) / eta))?;
    let ket_first = trace_prod(&chain.l, &op_transfer(&b2, a, ident, &right_b1)) / eta;
    let right_b2 = chain.connected_sum(&(op_transfer(&b2, a, ident, &chain.r) / eta))?;
    let bra_first = trace_prod(&chain.l, &op_transfer(a, &b1, ident, &right_b2)) / eta;
    Ok((local + ket_first + bra_first) / nrm / dx)
}

/// Tangent overlap extrapolated from [`LATTICE_SPACINGS`].
pub fn lattice_tangent_extrapolated(
    state: &UniformCmps,
    tv1: (&CMat, &CMat),
    tv2: (&CMat, &CMat),
    fock_cutoff: usize,
) -> Result<Complex64> {
    let v: Vec<Complex64> = LATTICE_SPACINGS
        .iter()
        .map(|&dx| lattice_tangent_overlap(state, tv1, tv2, dx, fock_cutoff))
        .collect::<Result<_>>()?;
    Ok((v[2] * 8.0 - v[1] * 6.0 + v[0]) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dense::c;

    #[test]
    fn richardson_removes_polynomial_terms() {
        let f = |h: f64| 2.0 + 3.0 * h - h * h + 5.0 * h.powi(3);
        let hs = [0.1, 0.05, 0.025, 0.0125];
        assert!((richardson(&hs.map(f)) - 2.0).abs() < 1e-13);
        let three = [f(0.1), f(0.05), f(0.025)];
        assert!((richardson(&three) - richardson3(three[0], three[1], three[2])).abs() < 1e-14);
    }

    #[test]
    fn empty_state_has_no_particles() {
        let u = UniformCmps::new(CMat::from_element(2, 2, c(0.0, 0.0)) - eye(2).scale(0.5), CMat::zeros(2, 2)).unwrap();
        let o = lattice_discretization_oracle(&Cmps::Uniform(u), 1e-2, 2, 0.0).unwrap();
        assert_eq!(o.density, 0.0);
        assert_eq!(o.pair, 0.0);
        assert!(o.kinetic.abs() < 1e-9);
    }

    #[test]
    fn limits_enforced() {
        let u = crate::cmps::random_uniform_state(5, 0).unwrap();
        assert!(matches!(
            lattice_discretization_oracle(&Cmps::Uniform(u), 1e-2, 2, 0.0),
            Err(QgpeError::ResourceLimit(_))
        ));
    }

    #[test]
    fn coherent_state_density_extrapolates() {
        let n = 0.6;
        let u = UniformCmps::new(CMat::from_element(1, 1, c(-n / 2.0, 0.0)), CMat::from_element(1, 1, c(n.sqrt(), 0.0))).unwrap();
        let o = lattice_extrapolated(&u, 3).unwrap();
        assert!((o.density - n).abs() < 1e-6, "{}", o.density);
        assert!((o.pair - n * n).abs() < 1e-5, "{}", o.pair);
    }
}
