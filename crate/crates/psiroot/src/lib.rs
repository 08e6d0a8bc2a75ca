//! File formats, a Monte Carlo harness and the `psiroot` command line for
//! [`psiroot_core`].

pub mod cli;
pub mod formats;
pub mod montecarlo;

pub use psiroot_core;
