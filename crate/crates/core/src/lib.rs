//! Transmutation kernels for the half-line telegraph equation
//! `u_tt - u_xx + q(x) u = 0` with a Hermitian matrix potential, the boundary
//! control operator they induce, and independent numerical oracles.

pub mod boundary_map;
pub mod control;
pub mod control_op;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod potential;
pub mod propagator;

pub use control::{Bump, Control};
pub use error::{Error, Result};
pub use kernel::{solve_goursat, KernelField};
pub use potential::{PotentialGrid, PotentialSpec, Preset};
