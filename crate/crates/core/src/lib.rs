//! Root (psi-function) estimation of state vectors.
//!
//! A probability density is written as `P(x) = |ψ(x)|²` with `ψ` expanded in an
//! orthonormal basis, `ψ(x) = Σ cⱼ φⱼ(x)`. The coefficient vector `c` is the
//! estimand. Observations may come from two complementing spaces (coordinate
//! and momentum, or a register measured directly and after a unitary transform),
//! and the maximum-likelihood state solves the quasi-linear equation
//! `R(c)·c = (n + m)·c`.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the Monte Carlo
//! harness and the command-line tool live in the `psiroot` crate.
//!
//! Modules:
//! - [`basis`]: Hermite functions with their Fourier images, Gauss–Hermite
//!   quadrature, and discrete register bases.
//! - [`state`]: state vectors, densities, fidelity, density matrices.
//! - [`sampling`]: synthetic observations from a known state.
//! - [`estimator`]: the likelihood equation and its damped fixed-point solver.
//! - [`inference`]: Fisher information, covariance, confidence cones and
//!   chi-square tests.
//! - [`ehrenfest`]: checks of the Heisenberg matrix equation and of the
//!   Hamiltonian eigenrelation for a root expansion.

#![no_std]

extern crate alloc;

pub mod basis;
pub mod ehrenfest;
mod error;
pub mod estimator;
pub mod inference;
mod linalg;
pub mod sampling;
pub mod state;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type Complex64 = num_complex::Complex<f64>;
