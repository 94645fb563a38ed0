//! Explicit deferred correction (DeC) time integrators of arbitrary order.
//!
//! The crate provides
//!
//! - [`coeffs`]: subtimenodes and integration/interpolation matrices,
//! - [`dec_ode`]: the alpha-family of DeC steppers and its efficient variants
//!   that add subtimenodes by interpolation between iterations,
//! - [`rk_export`]: Butcher tableaux of every scheme and closed-form stage counts,
//! - [`stability`]: stability polynomials and region scans,
//! - [`adaptive`]: a p-adaptive stepper driven by successive-iterate differences,
//! - [`problems`]: ODE test problems with exact solutions,
//! - [`cg1d`]: a periodic 1D continuous Galerkin advection solver,
//! - [`bench`]: convergence and evaluation-count studies plus report I/O.

pub mod adaptive;
pub mod bench;
pub mod cg1d;
pub mod coeffs;
pub mod dec_ode;
pub mod error;
pub mod matrix;
pub mod problems;
pub mod quadrature;
pub mod rk_export;
pub mod stability;

pub use coeffs::{DecCoefficients, NodeFamily, NodeSet};
pub use dec_ode::{integrate, step, OdeSystem, Scheme, SchemePlan, StepReport, Variant};
pub use error::{DecError, Result};
pub use matrix::Matrix;
