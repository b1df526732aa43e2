//! Uniform and finite continuous matrix product states, gauge transformations
//! and the left-canonical form.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{QgpeError, Result};
use crate::numerics::dense::{
    antihermitian_part, check_finite, check_square, cholesky_lower, commutator, condition_number, eye, inverse,
    norm, CMat, CVec,
};

/// Translation-invariant cMPS given by `Q` and `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformCmps {
    pub q: CMat,
    pub r: CMat,
}

impl UniformCmps {
    pub fn new(q: CMat, r: CMat) -> Result<Self> {
        let d = q.nrows();
        if d == 0 {
            return Err(QgpeError::InvalidInput("bond dimension must be positive".into()));
        }
        check_square(&q, d, "Q")?;
        check_square(&r, d, "R")?;
        check_finite(&q, "Q")?;
        check_finite(&r, "R")?;
        Ok(UniformCmps { q, r })
    }

    pub fn bond_dim(&self) -> usize {
        self.q.nrows()
    }

    /// `||Q + Q^dag + R^dag R||_F`
    pub fn canonical_residual(&self) -> f64 {
        norm(&(&self.q + self.q.adjoint() + self.r.adjoint() * &self.r))
    }

    pub fn is_left_canonical(&self) -> bool {
        self.canonical_residual() < 1e-10
    }

    /// Reset the Hermitian part of `Q` to `-R^dag R / 2`, keeping its
    /// anti-Hermitian part. Exact left-canonical form for the current `R`.
    pub fn restore_left_canonical(&mut self) {
        self.q = antihermitian_part(&self.q) - (self.r.adjoint() * &self.r).scale(0.5);
    }
}

/// Boundary conditions at the two walls of a finite box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    /// `R(x1) = a 1`, `R(x2) = b 1`.
    Dirichlet { a: Complex64, b: Complex64 },
    Neumann,
}

/// A cMPS on a uniform grid `x1 = x[0] < ... < x[N-1] = x2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCmps {
    pub x1: f64,
    pub x2: f64,
    pub qs: Vec<CMat>,
    pub rs: Vec<CMat>,
    pub v1: CVec,
    pub v2: CVec,
    pub bc: BoundaryCondition,
}

impl FiniteCmps {
    pub fn new(x1: f64, x2: f64, qs: Vec<CMat>, rs: Vec<CMat>, v1: CVec, v2: CVec, bc: BoundaryCondition) -> Result<Self> {
        let n = qs.len();
        if n < 3 || rs.len() != n {
            return Err(QgpeError::InvalidInput(format!("need at least 3 grid points with matching Q and R, got {n}/{}", rs.len())));
        }
        if !(x2 > x1) || !x1.is_finite() || !x2.is_finite() {
            return Err(QgpeError::InvalidInput("grid must satisfy x1 < x2".into()));
        }
        let d = qs[0].nrows();
        if d == 0 {
            return Err(QgpeError::InvalidInput("bond dimension must be positive".into()));
        }
        for (q, r) in qs.iter().zip(&rs) {
            check_square(q, d, "Q(x)")?;
            check_square(r, d, "R(x)")?;
            check_finite(q, "Q(x)")?;
            check_finite(r, "R(x)")?;
        }
        if v1.len() != d || v2.len() != d {
            return Err(QgpeError::DimensionMismatch("boundary vectors".into()));
        }
        if v1.norm() == 0.0 || v2.norm() == 0.0 {
            return Err(QgpeError::InvalidInput("boundary vectors must be nonzero".into()));
        }
        let mut state = FiniteCmps { x1, x2, qs, rs, v1, v2, bc };
        if let BoundaryCondition::Dirichlet { a, b } = bc {
            if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
                return Err(QgpeError::InvalidInput("Dirichlet amplitudes must be finite".into()));
            }
            state.apply_dirichlet();
        }
        Ok(state)
    }

    /// Finite state whose bulk matrices are copies of a uniform state.
    pub fn from_uniform(u: &UniformCmps, x1: f64, x2: f64, n: usize, v1: CVec, v2: CVec, bc: BoundaryCondition) -> Result<Self> {
        FiniteCmps::new(x1, x2, vec![u.q.clone(); n], vec![u.r.clone(); n], v1, v2, bc)
    }

    pub fn bond_dim(&self) -> usize {
        self.qs[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.qs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qs.is_empty()
    }

    pub fn dx(&self) -> f64 {
        (self.x2 - self.x1) / (self.len() - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.len()).map(|i| self.x1 + i as f64 * dx).collect()
    }

    /// Enforce the promoted Dirichlet condition on the boundary rows of `R`.
    pub fn apply_dirichlet(&mut self) {
        if let BoundaryCondition::Dirichlet { a, b } = self.bc {
            let d = self.bond_dim();
            let n = self.len();
            self.rs[0] = eye(d) * a;
            self.rs[n - 1] = eye(d) * b;
        }
    }
}

/// A gauge transformation `G(x)`; a single matrix for uniform states.
#[derive(Debug, Clone, PartialEq)]
pub enum GaugeTransform {
    Uniform(CMat),
    Local(Vec<CMat>),
}

/// State variants accepted by the gauge and derivative helpers.
#[derive(Debug, Clone, PartialEq)]
pub enum Cmps {
    Uniform(UniformCmps),
    Finite(FiniteCmps),
}

fn checked_inverse(g: &CMat) -> Result<CMat> {
    let cond = condition_number(g);
    if !cond.is_finite() || cond > 1e12 {
        return Err(QgpeError::SingularGauge { condition: cond });
    }
    inverse(g)
}

/// `R -> G^-1 R G`, `Q -> G^-1 (Q + d/dx) G`.
pub fn gauge_transform_uniform(state: &UniformCmps, g: &CMat) -> Result<UniformCmps> {
    check_square(g, state.bond_dim(), "G")?;
    let gi = checked_inverse(g)?;
    UniformCmps::new(&gi * &state.q * g, &gi * &state.r * g)
}

pub fn gauge_transform_finite(state: &FiniteCmps, gs: &[CMat]) -> Result<FiniteCmps> {
    let n = state.len();
    if gs.len() != n {
        return Err(QgpeError::DimensionMismatch(format!("gauge has {} points, state has {n}", gs.len())));
    }
    let d = state.bond_dim();
    let mut ginv = Vec::with_capacity(n);
    for g in gs {
        check_square(g, d, "G(x)")?;
        ginv.push(checked_inverse(g)?);
    }
    let dg = finite_difference(gs, state.dx());
    let mut qs = Vec::with_capacity(n);
    let mut rs = Vec::with_capacity(n);
    for i in 0..n {
        qs.push(&ginv[i] * (&state.qs[i] * &gs[i] + &dg[i]));
        rs.push(&ginv[i] * &state.rs[i] * &gs[i]);
    }
    // v1^dag -> v1^dag G(x1)  <=>  v1 -> G(x1)^dag v1
    let v1 = gs[0].adjoint() * &state.v1;
    let v2 = &ginv[n - 1] * &state.v2;
    let mut out = FiniteCmps { x1: state.x1, x2: state.x2, qs, rs, v1, v2, bc: state.bc };
    if let BoundaryCondition::Dirichlet { .. } = out.bc {
        // a multiple of the identity is gauge invariant; re-apply to remove round-off
        out.apply_dirichlet();
    }
    Ok(out)
}

pub fn gauge_transform(state: &Cmps, g: &GaugeTransform) -> Result<Cmps> {
    match (state, g) {
        (Cmps::Uniform(u), GaugeTransform::Uniform(g)) => Ok(Cmps::Uniform(gauge_transform_uniform(u, g)?)),
        (Cmps::Finite(f), GaugeTransform::Local(gs)) => Ok(Cmps::Finite(gauge_transform_finite(f, gs)?)),
        (Cmps::Finite(f), GaugeTransform::Uniform(g)) => {
            Ok(Cmps::Finite(gauge_transform_finite(f, &vec![g.clone(); f.len()])?))
        }
        (Cmps::Uniform(_), GaugeTransform::Local(_)) => Err(QgpeError::InvalidInput(
            "a uniform state requires an x-independent gauge transform".into(),
        )),
    }
}

/// Bring a uniform state to left-canonical form.
///
/// The leading eigenvalue `lambda` of the transfer generator only sets the norm
/// per unit length; it is removed by `Q -> Q - lambda/2`. The left fixed point
/// is then factored as `rho_L = L^dag L` and `G = L^-1`.
pub fn left_canonicalize(state: &UniformCmps) -> Result<(UniformCmps, CMat)> {
    let d = state.bond_dim();
    let (lambda, rho_l) = crate::transfer::dominant_left_fixed_point(state)?;
    let (vals, _) = crate::numerics::dense::hermitian_eigen(&rho_l);
    let max = vals.last().copied().unwrap_or(0.0);
    let min = vals.first().copied().unwrap_or(0.0);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < 1e12) {
        return Err(QgpeError::DegenerateFixedPoint { condition });
    }
    let rho_l = rho_l.unscale(crate::numerics::dense::trace(&rho_l).re / d as f64);
    let lower = cholesky_lower(&rho_l).ok_or(QgpeError::DegenerateFixedPoint { condition })?;
    let l = lower.adjoint();
    let g = checked_inverse(&l)?;
    let shifted = UniformCmps { q: &state.q - eye(d) * Complex64::new(lambda / 2.0, 0.0), r: state.r.clone() };
    let mut out = gauge_transform_uniform(&shifted, &g)?;
    out.restore_left_canonical();
    Ok((out, g))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, d: usize, scale: f64, complex: bool) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = if complex { StandardNormal.sample(rng) } else { 0.0 };
        Complex64::new(re * scale, im * scale)
    })
}

/// Random left-canonical uniform state, deterministic per seed.
pub fn random_uniform_state(d: usize, seed: u64) -> Result<UniformCmps> {
    random_state_impl(d, seed, true)
}

/// Random left-canonical state with real `Q` and `R`.
///
/// Real matrices are invariant under complex conjugation, so flows started
/// here keep the time-reversal symmetry of the Lieb-Liniger Hamiltonian.
pub fn random_real_uniform_state(d: usize, seed: u64) -> Result<UniformCmps> {
    random_state_impl(d, seed, false)
}

fn random_state_impl(d: usize, seed: u64, complex: bool) -> Result<UniformCmps> {
    if d == 0 {
        return Err(QgpeError::InvalidInput("bond dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let r = gaussian_matrix(&mut rng, d, scale, complex);
    let h = antihermitian_part(&gaussian_matrix(&mut rng, d, scale, complex));
    let q = h - (r.adjoint() * &r).scale(0.5);
    UniformCmps::new(q, r)
}

/// Random invertible matrix close to the identity, for gauge tests and scripts.
pub fn random_gauge(d: usize, seed: u64, strength: f64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eye(d) + gaussian_matrix(&mut rng, d, strength / (d as f64).sqrt(), true)
}

/// Second-order finite-difference derivative on a uniform grid: centered in
/// the interior, one-sided three-point at the endpoints.
pub fn finite_difference(values: &[CMat], dx: f64) -> Vec<CMat> {
    let n = values.len();
    assert!(n >= 3, "finite differences need at least three points");
    let mut out = Vec::with_capacity(n);
    out.push((values[0].scale(-3.0) + values[1].scale(4.0) - &values[2]).unscale(2.0 * dx));
    for i in 1..n - 1 {
        out.push((&values[i + 1] - &values[i - 1]).unscale(2.0 * dx));
    }
    out.push((values[n - 1].scale(3.0) - values[n - 2].scale(4.0) + &values[n - 3]).unscale(2.0 * dx));
    out
}

/// Second derivative: three-point centered stencil, four-point one-sided at the ends.
pub fn second_difference(values: &[CMat], dx: f64) -> Vec<CMat> {
    let n = values.len();
    assert!(n >= 4, "second differences need at least four points");
    let h2 = dx * dx;
    let mut out = Vec::with_capacity(n);
    out.push((values[0].scale(2.0) - values[1].scale(5.0) + values[2].scale(4.0) - &values[3]).unscale(h2));
    for i in 1..n - 1 {
        out.push((&values[i + 1] - values[i].scale(2.0) + &values[i - 1]).unscale(h2));
    }
    out.push(
        (values[n - 1].scale(2.0) - values[n - 2].scale(5.0) + values[n - 3].scale(4.0) - &values[n - 4]).unscale(h2),
    );
    out
}

/// `D_x R = dR/dx + [Q, R]` at every grid point (a single entry for uniform states).
pub fn covariant_derivative_x(state: &Cmps) -> Vec<CMat> {
    match state {
        Cmps::Uniform(u) => vec![commutator(&u.q, &u.r)],
        Cmps::Finite(f) => covariant_derivative_finite(f),
    }
}

pub fn covariant_derivative_finite(f: &FiniteCmps) -> Vec<CMat> {
    let dr = finite_difference(&f.rs, f.dx());
    dr.into_iter()
        .zip(f.qs.iter().zip(&f.rs))
        .map(|(d, (q, r))| d + commutator(q, r))
        .collect()
}

/// Normalized random boundary vector helper.
pub fn unit_vector(d: usize, index: usize) -> CVec {
    let mut v = DVector::zeros(d);
    v[index.min(d - 1)] = Complex64::new(1.0, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dense::c;

    #[test]
    fn identity_gauge_is_noop() {
        let s = random_uniform_state(3, 7).unwrap();
        let t = gauge_transform_uniform(&s, &eye(3)).unwrap();
        assert!(norm(&(t.q - &s.q)) < 1e-15 && norm(&(t.r - &s.r)) < 1e-15);
    }

    #[test]
    fn scalar_gauge_is_noop_at_d1() {
        let s = random_uniform_state(1, 3).unwrap();
        let t = gauge_transform_uniform(&s, &CMat::from_element(1, 1, c(2.5, -1.0))).unwrap();
        assert!(norm(&(t.q - &s.q)) < 1e-15 && norm(&(t.r - &s.r)) < 1e-15);
    }

    #[test]
    fn random_state_is_canonical_and_deterministic() {
        let a = random_uniform_state(8, 11).unwrap();
        let b = random_uniform_state(8, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.canonical_residual() < 1e-14);
        let one = random_uniform_state(1, 5).unwrap();
        let s = one.q[(0, 0)] + one.q[(0, 0)].conj() + one.r[(0, 0)].norm_sqr();
        assert_eq!(s.re, 0.0);
    }

    #[test]
    fn uniform_covariant_derivative_example() {
        let q = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        let r = CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)]);
        let s = Cmps::Uniform(UniformCmps { q, r });
        let d = covariant_derivative_x(&s);
        let expect = CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
        assert!(norm(&(&d[0] - expect)) < 1e-15);
    }

    #[test]
    fn linear_profile_derivative() {
        let n = 11;
        let dx = 0.1;
        let rs: Vec<CMat> = (0..n).map(|i| eye(2).scale(i as f64 * dx)).collect();
        let f = FiniteCmps::new(0.0, 1.0, vec![CMat::zeros(2, 2); n], rs, unit_vector(2, 0), unit_vector(2, 0), BoundaryCondition::Neumann).unwrap();
        for d in covariant_derivative_finite(&f) {
            assert!(norm(&(d - eye(2))) < 1e-12);
        }
    }

    #[test]
    fn dirichlet_rows_are_promoted() {
        let u = random_uniform_state(2, 1).unwrap();
        let f = FiniteCmps::from_uniform(&u, 0.0, 1.0, 5, unit_vector(2, 0), unit_vector(2, 1), BoundaryCondition::Dirichlet { a: c(0.5, 0.0), b: c(0.0, 0.0) }).unwrap();
        assert_eq!(f.rs[0], eye(2) * c(0.5, 0.0));
        assert_eq!(f.rs[4], CMat::zeros(2, 2));
    }
}
