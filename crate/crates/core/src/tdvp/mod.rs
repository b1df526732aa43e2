//! Variational equations of motion: uniform and finite right-hand sides, gauge
//! potentials, the tangent-space metric and the real- and imaginary-time
//! integrators built on them.

mod finite;
mod integrate;
mod metric;
mod uniform;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QgpeError, Result};
use crate::numerics::dense::{commutator, CMat, CVec};

pub use finite::{boundary_flow, finite_energy_of, qgpe_rhs_finite, solve_f_finite, FiniteFlow};
pub use integrate::{
    calibrate_mu, evolve_finite, finite_trajectory, ground_state_search, imaginary_time_finite, imaginary_time_ground_state,
    mu_for_gamma, real_time_evolve, real_time_trajectory, relax_finite, FiniteRecord, FiniteRelaxation, GroundStateOptions, GroundStateRun, SearchRecord,
    Trajectory, TrajectoryRecord,
};
pub(crate) use uniform::hermitian_inverse;
pub use metric::{tangent_metric, tangent_metric_finite, tangent_metric_uniform};
pub use uniform::{
    energy_gradient_norm, qgpe_rhs_uniform, qgpe_rhs_uniform_from, rhs_uniform_retracted, solve_f, uniform_energy, UniformFlow,
};

/// Lieb-Liniger couplings. The constant potential is `v0 = -mu`; an optional
/// profile adds to it point by point on finite grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiebLinigerParams {
    pub g: f64,
    pub mu: f64,
    #[serde(default)]
    pub potential: Option<Vec<f64>>,
}

impl LiebLinigerParams {
    pub fn new(g: f64, mu: f64) -> Self {
        LiebLinigerParams { g, mu, potential: None }
    }

    pub fn v0(&self) -> f64 {
        -self.mu
    }

    /// Potential at grid point `i`.
    pub fn v_at(&self, i: usize) -> f64 {
        self.v0() + self.potential.as_ref().and_then(|p| p.get(i).copied()).unwrap_or(0.0)
    }

    /// Potential sampled on `n` grid points.
    pub fn v_profile(&self, n: usize) -> Result<Vec<f64>> {
        if let Some(p) = &self.potential {
            if p.len() != n {
                return Err(QgpeError::DimensionMismatch(format!(
                    "potential has {} samples, grid has {n}",
                    p.len()
                )));
            }
        }
        Ok((0..n).map(|i| self.v_at(i)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.g.is_finite() || !self.mu.is_finite() {
            return Err(QgpeError::InvalidInput("g and mu must be finite".into()));
        }
        if let Some(p) = &self.potential {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(QgpeError::InvalidInput("potential must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    Real,
    Imaginary,
}

impl TimeMode {
    /// Factor turning the Hermitian generator into a time derivative:
    /// `-i` in real time, `-1` in imaginary time.
    pub fn factor(self) -> Complex64 {
        match self {
            TimeMode::Real => Complex64::new(0.0, -1.0),
            TimeMode::Imaginary => Complex64::new(-1.0, 0.0),
        }
    }
}

/// Variations `(V, W)` of `Q` and `R` at every point (one entry for uniform
/// states) and of the boundary vectors, `w1` for `v1` and `w2` for `v2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub v: Vec<CMat>,
    pub w: Vec<CMat>,
    pub w1: CVec,
    pub w2: CVec,
}

impl TangentVector {
    /// Uniform tangent vector in the left gauge `V = -R^dag W`.
    pub fn gauge_fixed(r: &CMat, w: CMat) -> Self {
        let d = r.nrows();
        let v = -(r.adjoint() * &w);
        TangentVector { v: vec![v], w: vec![w], w1: CVec::zeros(d), w2: CVec::zeros(d) }
    }

    /// Finite tangent vector in the left gauge with the given boundary variations.
    pub fn gauge_fixed_finite(rs: &[CMat], ws: Vec<CMat>, w1: CVec, w2: CVec) -> Self {
        let v = rs.iter().zip(&ws).map(|(r, w)| -(r.adjoint() * w)).collect();
        TangentVector { v, w: ws, w1, w2 }
    }

    pub fn zeros_like(d: usize, n: usize) -> Self {
        TangentVector {
            v: vec![CMat::zeros(d, d); n],
            w: vec![CMat::zeros(d, d); n],
            w1: CVec::zeros(d),
            w2: CVec::zeros(d),
        }
    }
}

/// Time component of the gauge connection, `P = -i R^dag D_x R + i F`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugePotential {
    pub p: Vec<CMat>,
    pub f: Vec<CMat>,
}

/// `B = g R^2 - [R, D_x R]`
pub fn interaction_kernel(r: &CMat, dr: &CMat, g: f64) -> CMat {
    (r * r).scale(g) - commutator(r, dr)
}

/// `P = -i R^dag D_x R + i F` point by point.
pub fn choose_p(rs: &[CMat], drs: &[CMat], fs: &[CMat]) -> GaugePotential {
    let i = Complex64::new(0.0, 1.0);
    let p = rs
        .iter()
        .zip(drs)
        .zip(fs)
        .map(|((r, dr), f)| (f - r.adjoint() * dr) * i)
        .collect();
    GaugePotential { p, f: fs.to_vec() }
}

/// `P_tau = -R^dag D_x R + F`, so that `P = i P_tau`.
pub(crate) fn p_tau(r: &CMat, dr: &CMat, f: &CMat) -> CMat {
    f - r.adjoint() * dr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmps::random_uniform_state;
    use crate::numerics::dense::{c, norm};

    #[test]
    fn kernel_scalar_and_commuting() {
        let r = CMat::from_element(1, 1, c(0.3, 0.4));
        let b = interaction_kernel(&r, &CMat::from_element(1, 1, c(1.0, 2.0)), 2.0);
        assert!((b[(0, 0)] - c(0.3, 0.4) * c(0.3, 0.4) * 2.0).norm() < 1e-15);
        let r = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)]));
        let b = interaction_kernel(&r, &CMat::zeros(2, 2), 0.5);
        assert!(norm(&(b - (&r * &r).scale(0.5))) < 1e-15);
    }

    #[test]
    fn p_zero_and_scalar() {
        let z = CMat::zeros(2, 2);
        let gp = choose_p(&[z.clone()], &[z.clone()], &[z.clone()]);
        assert_eq!(gp.p[0], z);
        let f = CMat::from_element(1, 1, c(0.7, 0.0));
        let r = CMat::from_element(1, 1, c(0.2, 0.1));
        let gp = choose_p(&[r], &[CMat::zeros(1, 1)], &[f]);
        assert!((gp.p[0][(0, 0)] - c(0.0, 0.7)).norm() < 1e-15);
    }

    #[test]
    fn p_matches_formula() {
        let s = random_uniform_state(2, 4).unwrap();
        let dr = commutator(&s.q, &s.r);
        let f = crate::numerics::dense::hermitian_part(&s.q);
        let gp = choose_p(&[s.r.clone()], &[dr.clone()], &[f.clone()]);
        let i = c(0.0, 1.0);
        let want = -(s.r.adjoint() * &dr) * i + &f * i;
        assert!(norm(&(&gp.p[0] - want)) < 1e-14);
    }

    #[test]
    fn potential_profile() {
        let mut p = LiebLinigerParams::new(1.0, 2.0);
        assert_eq!(p.v_profile(3).unwrap(), vec![-2.0; 3]);
        p.potential = Some(vec![1.0, 0.0]);
        assert!(p.v_profile(3).is_err());
    }
}
