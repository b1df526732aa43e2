//! Independent reference values: the exact Lieb-Liniger ground state, the
//! mean-field and Bogoliubov closed forms, and a lattice discretization that
//! cross-checks the continuum contractions.

pub mod bethe;
pub mod lattice;

pub use bethe::{bethe_energy_derivative, bethe_ground_energy, bethe_solution, gauss_legendre, BetheSolution};
pub use lattice::{
    lattice_discretization_oracle, lattice_extrapolated, lattice_extrapolated_over, lattice_tangent_extrapolated, lattice_tangent_overlap,
    richardson, richardson3, LatticeObservables, LATTICE_SPACINGS,
};

/// Bogoliubov dispersion `sqrt(k^4 + 4 g rho k^2)`.
pub fn bogoliubov_dispersion(k: f64, g: f64, rho: f64) -> f64 {
    (k.powi(4) + 4.0 * g * rho * k * k).sqrt()
}

/// Mean-field ground state `n = mu / (2g)`, `e = -mu^2 / (4g)`.
pub fn mean_field_ground_state(g: f64, mu: f64) -> (f64, f64) {
    (mu / (2.0 * g), -mu * mu / (4.0 * g))
}

/// Amplitude of the mean-field density response to a static drive `cos(k x)`
/// of unit strength: `2 n / (k^2 + 4 g n)`.
pub fn mean_field_static_response(k: f64, g: f64, n: f64) -> f64 {
    2.0 * n / (k * k + 4.0 * g * n)
}

/// Mean-field density response to `cos(k x - omega t)`:
/// `2 n k^2 / |k^4 + 4 g n k^2 - omega^2|`.
pub fn mean_field_dynamic_response(k: f64, omega: f64, g: f64, n: f64) -> f64 {
    let w2 = bogoliubov_dispersion(k, g, n).powi(2);
    2.0 * n * k * k / (w2 - omega * omega).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispersion_limits() {
        assert_eq!(bogoliubov_dispersion(0.0, 1.0, 1.0), 0.0);
        assert_eq!(bogoliubov_dispersion(3.0, 0.0, 1.0), 9.0);
        let (g, rho) = (0.7, 1.3);
        let k = 100.0 * (g * rho as f64).sqrt();
        let approx = k * k + 2.0 * g * rho;
        assert!((bogoliubov_dispersion(k, g, rho) - approx).abs() < 1e-4 * approx);
        assert_eq!(bogoliubov_dispersion(-2.0, g, rho), bogoliubov_dispersion(2.0, g, rho));
    }

    #[test]
    fn static_limit_of_dynamic_response() {
        let (k, g, n) = (0.8, 1.1, 0.4);
        let a = mean_field_static_response(k, g, n);
        let b = mean_field_dynamic_response(k, 0.0, g, n);
        assert!((a - b).abs() < 1e-15);
    }
}
