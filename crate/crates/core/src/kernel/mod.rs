//! The transmutation kernel `w(x, t)` and its characteristic form `v(xi, eta)`.

mod check;
mod constants;
mod derivatives;
mod field;
mod lattice;
mod picard;

pub use check::{check_goursat, GoursatResiduals};
pub use constants::{kernel_constants, kernel_constants_with, wtt_line_integral_max, KernelConstants};
pub use derivatives::{explicit_derivatives, KernelDerivatives};
pub use field::KernelField;
pub use lattice::{Lattice, NodeField};
pub use picard::{
    apply_v, factorial_tail, initial_v0, solve_goursat, solve_goursat_with, PicardOptions,
    DEFAULT_MAX_SWEEPS,
};
