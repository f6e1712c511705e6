//! Simulation and verification harness for non-local drift-diffusion
//! equations
//!
//! ```text
//! ∂tθ − ∇·(vθ) + Lθ = 0,   div v = 0,
//! ```
//!
//! on a periodic torus, where `L` is a Lévy-type operator with a symmetric
//! jump kernel `π(y)` and symbol `a(ξ) = ∫(1 − cos ξ·y) π(y) dy`.
//!
//! Modules:
//!
//! - [`kernel`]: kernel families, two-sided bound checks, Lévy–Khinchin symbols.
//! - [`field`]: torus grids, scalar/velocity fields, spectral transforms and norms.
//! - [`solver`]: forward viscosity problem, backward dual problem, Duhamel/Picard.
//! - [`molecules`]: r-molecules, center transport, envelope tracking.
//! - [`verify`]: standalone inequality diagnostics.
//! - [`experiment`]: config-driven suites behind the command-line runner.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod field;
pub mod kernel;
pub mod molecules;
pub mod solver;
pub mod verify;

mod bessel;
mod json;
pub mod random;

pub use error::{Error, Result};
