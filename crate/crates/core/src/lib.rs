//! Splitting scheme for the one-dimensional reaction-diffusion problem
//! `w_t - (w^m w_x)_x = w^p`, `1 < p < m + 1`, written for the pressure
//! `u = w^m`:
//!
//! ```text
//! u_t - (1/m) u_x^2 - u u_xx = m u^{q+1},   q = (p - 1) / m  in (0, 1).
//! ```
//!
//! Each step solves the Hamilton-Jacobi part exactly at the nodes with the
//! Hopf-Lax formula (this is what moves the support), then the degenerate
//! parabolic part with a linearized backward Euler step and mass-lumped P1
//! elements. The [`analysis`] module builds the self-similar subsolutions
//! that certify blow-up.

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod hyperbolic;
pub mod mesh;
pub mod parabolic;
pub mod verify;

pub use driver::{run, RunTrace, SchemeParams, Simulation, StepReport, Termination};
pub use error::{Result, SchemeError};
pub use mesh::{interpolate, MovingGrid, NodalField, SlopeField};
