//! Dense complex kernels, structured linear solvers and ODE steppers.

pub mod dense;
pub mod krylov;
pub mod ode;
pub mod sylvester;

pub use dense::{CMat, CVec};
pub use krylov::{gmres, gmres_from, solve_deflated, solve_deflated_from, solve_linear, solve_singular_linear, FnMap, GmresOptions, LinearMap};
pub use ode::{ode_step_rk4, StateVector};
pub use sylvester::{solve_sylvester, SylvesterSolver};
