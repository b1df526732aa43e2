//! Time-dependent variational flows of continuous matrix product states for the
//! Lieb-Liniger Bose gas: ground states, real-time evolution, finite boxes with
//! Dirichlet or Neumann walls, and linear response around uniform ground states.

pub mod error;
pub mod bdg;
pub mod checkpoint;
pub mod cmps;
pub mod numerics;
pub mod oracle;
pub mod tdvp;
pub mod transfer;

pub use error::{QgpeError, Result};
