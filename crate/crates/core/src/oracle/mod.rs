//! Independent reference computations.

mod bessel;
mod compare;
mod fd;

pub use bessel::{bessel_j1_over_z, bessel_kernel_constant, bessel_substitution_residual};
pub use compare::{compare, ErrorFigures};
pub use fd::{fd_solve, FdConfig};
