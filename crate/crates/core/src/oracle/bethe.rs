//! Lieb's integral equation for the ground state of the repulsive Bose gas.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{QgpeError, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Solution of the Lieb equation at a given dimensionless coupling.
#[derive(Debug, Clone, Serialize)]
pub struct BetheSolution {
    pub gamma: f64,
    /// Dimensionless energy `e(gamma)` with `E / L = e rho^3`.
    pub e_dimensionless: f64,
    /// Dimensionless Fermi rapidity (the cutoff of the rapidity distribution).
    pub lambda: f64,
    pub n_quad: usize,
}

/// `(gamma, e)` at fixed cutoff `lambda`.
fn solve_at_lambda(lambda: f64, x: &[f64], w: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = x[i] - x[j];
            a[(i, j)] -= w[j] * lambda / (PI * (lambda * lambda + d * d));
        }
    }
    let b = DVector::from_element(n, 1.0 / (2.0 * PI));
    let lu = a.clone().lu();
    let mut rho = lu.solve(&b).ok_or(QgpeError::NoConvergence { steps: 0, residual: f64::NAN })?;
    // one step of iterative refinement
    let res = &b - &a * &rho;
    if let Some(corr) = lu.solve(&res) {
        rho += corr;
    }
    let norm: f64 = (0..n).map(|i| w[i] * rho[i]).sum();
    let second: f64 = (0..n).map(|i| w[i] * x[i] * x[i] * rho[i]).sum();
    let gamma = lambda / norm;
    let e = (gamma / lambda).powi(3) * second;
    if !gamma.is_finite() || !e.is_finite() {
        return Err(QgpeError::NoConvergence { steps: 0, residual: f64::NAN });
    }
    Ok((gamma, e))
}

/// Solve for the cutoff that yields `gamma` (bisection in `log lambda`).
pub fn bethe_solution(gamma: f64, n_quad: usize) -> Result<BetheSolution> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(QgpeError::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    if n_quad < 64 {
        return Err(QgpeError::InvalidInput(format!("n_quad must be at least 64, got {n_quad}")));
    }
    let (x, w) = gauss_legendre(n_quad);
    let (mut lo, mut hi) = (1e-6_f64.ln(), 1e7_f64.ln());
    let g_lo = solve_at_lambda(lo.exp(), &x, &w)?.0;
    let g_hi = solve_at_lambda(hi.exp(), &x, &w)?.0;
    if !(g_lo < gamma && gamma < g_hi) {
        return Err(QgpeError::InvalidInput(format!("gamma {gamma} outside solvable range [{g_lo:e}, {g_hi:e}]")));
    }
    let max_iter = 200;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let g = solve_at_lambda(mid.exp(), &x, &w)?.0;
        if g < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            let lambda = (0.5 * (lo + hi)).exp();
            let (_, e) = solve_at_lambda(lambda, &x, &w)?;
            return Ok(BetheSolution { gamma, e_dimensionless: e, lambda, n_quad });
        }
    }
    Err(QgpeError::NoConvergence { steps: max_iter, residual: (hi - lo).exp() })
}

/// Dimensionless ground-state energy `e(gamma)`.
pub fn bethe_ground_energy(gamma: f64, n_quad: usize) -> Result<f64> {
    Ok(bethe_solution(gamma, n_quad)?.e_dimensionless)
}

/// `de/dgamma` by a central difference in `log gamma`.
pub fn bethe_energy_derivative(gamma: f64, n_quad: usize) -> Result<f64> {
    let h = 1e-4;
    let ep = bethe_ground_energy(gamma * (1.0 + h), n_quad)?;
    let em = bethe_ground_energy(gamma * (1.0 - h), n_quad)?;
    Ok((ep - em) / (2.0 * gamma * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_integrates_polynomials() {
        let (x, w) = gauss_legendre(64);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn strong_coupling_limit() {
        let g = 1e3;
        let e = bethe_ground_energy(g, 128).unwrap();
        let series = PI * PI / 3.0 * (1.0 - 4.0 / g);
        assert!((e - series).abs() < 0.01 * series);
    }

    #[test]
    fn weak_coupling_limit() {
        let e = bethe_ground_energy(0.01, 256).unwrap();
        assert!((e / 0.01 - 1.0).abs() < 0.05, "{e}");
    }

    #[test]
    fn self_convergence() {
        let a = bethe_ground_energy(1.35, 64).unwrap();
        let b = bethe_ground_energy(1.35, 128).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }
}
