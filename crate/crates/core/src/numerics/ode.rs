//! Classical fourth-order Runge-Kutta stepping over vector-space states.

use super::dense::{all_finite, CMat};
use crate::error::{QgpeError, Result};

/// Minimal vector-space structure needed by the explicit steppers.
pub trait StateVector: Clone {
    /// `self + alpha * other`
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self;
    fn is_finite(&self) -> bool;
}

impl StateVector for f64 {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        self + alpha * other
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl StateVector for CMat {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        self + other.scale(alpha)
    }
    fn is_finite(&self) -> bool {
        all_finite(self)
    }
}

impl<S: StateVector> StateVector for Vec<S> {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        self.iter().zip(other).map(|(a, b)| a.add_scaled(alpha, b)).collect()
    }
    fn is_finite(&self) -> bool {
        self.iter().all(StateVector::is_finite)
    }
}

impl<A: StateVector, B: StateVector> StateVector for (A, B) {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        (self.0.add_scaled(alpha, &other.0), self.1.add_scaled(alpha, &other.1))
    }
    fn is_finite(&self) -> bool {
        self.0.is_finite() && self.1.is_finite()
    }
}

/// One RK4 step of `dy/dt = f(t, y)`.
pub fn ode_step_rk4<S, F>(f: F, y: &S, t: f64, dt: f64) -> Result<S>
where
    S: StateVector,
    F: Fn(f64, &S) -> Result<S>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(QgpeError::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let stage = |s: Result<S>| -> Result<S> {
        let s = s?;
        if s.is_finite() {
            Ok(s)
        } else {
            Err(QgpeError::NonFiniteDerivative)
        }
    };
    let k1 = stage(f(t, y))?;
    let k2 = stage(f(t + 0.5 * dt, &y.add_scaled(0.5 * dt, &k1)))?;
    let k3 = stage(f(t + 0.5 * dt, &y.add_scaled(0.5 * dt, &k2)))?;
    let k4 = stage(f(t + dt, &y.add_scaled(dt, &k3)))?;
    let out = y
        .add_scaled(dt / 6.0, &k1)
        .add_scaled(dt / 3.0, &k2)
        .add_scaled(dt / 3.0, &k3)
        .add_scaled(dt / 6.0, &k4);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(QgpeError::NonFiniteDerivative)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_identity() {
        let y = vec![1.0, -2.0, 3.5];
        let out = ode_step_rk4(|_, y: &Vec<f64>| Ok(vec![0.0; y.len()]), &y, 0.0, 0.1).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn exponential_decay() {
        let dt = 0.01;
        let out = ode_step_rk4(|_, y: &f64| Ok(-*y), &1.0, 0.0, dt).unwrap();
        assert!((out - (-dt).exp()).abs() < 1e-10);
    }

    #[test]
    fn nonfinite_stage_is_reported() {
        let err = ode_step_rk4(|_, _y: &f64| Ok(f64::NAN), &1.0, 0.0, 0.1).unwrap_err();
        assert_eq!(err, QgpeError::NonFiniteDerivative);
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(ode_step_rk4(|_, y: &f64| Ok(*y), &1.0, 0.0, 0.0).is_err());
    }
}
