//! Numerical lab for trait-structured Fisher-KPP fronts.
//!
//! The crate simulates `n_t = θ n_xx + n_θθ + r n (1 − ρ)` and its local
//! relatives, computes the principal-eigenvalue dispersion relation that
//! fixes the front speed `c*` and decay rate `λ*`, and measures the
//! logarithmic delay `X(t) = c* t − 3/(2λ*) log t + O(1)` together with
//! the analytic inequalities that control it.
//!
//! Modules:
//!
//! - [`model`]: grids, profiles, fields and reaction laws.
//! - [`dispersion`]: eigenpairs, `c(λ)`, `(c*, λ*)` and derived constants.
//! - [`solver`]: ADI time stepping on front-following windows.
//! - [`front`]: level sets, delay fits, tail slopes, Harnack ratios.
//! - [`probes`]: Harnack, Varadhan, kernel-power and Nash probes.
//! - [`asymptotics`]: the approximate solution of the drift-corrected
//!   linear problem and the decay laws around it.
//!
//! The guide in `book/` walks through each of these with runnable code.

pub mod asymptotics;
pub mod dispersion;
pub mod error;
pub mod front;
pub mod model;
pub mod probes;
pub mod solver;
pub mod stencil;
pub(crate) mod tridiag;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/dispersion.md")]
    mod dispersion {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/fronts.md")]
    mod fronts {}
    #[doc = include_str!("../../../book/src/probes.md")]
    mod probes {}
    #[doc = include_str!("../../../book/src/expansion.md")]
    mod expansion {}
}
