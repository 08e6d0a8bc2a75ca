//! Orthonormal bases and their conjugate-space images.
//!
//! [`ContinuousBasis`] is the Hermite-function system rescaled by `a`:
//! `φⱼ(x) = a^{−1/2} hⱼ(x/a)`. Its Fourier image (unitary convention,
//! `ψ̃(p) = (2π)^{−1/2} ∫ ψ(x) e^{−ipx} dx`) is `φ̃ⱼ(p) = (−i)ʲ a^{1/2} hⱼ(pa)`.
//!
//! [`DiscreteBasis`] is a register of dimension `s` with the unitary `U` that
//! maps direct amplitudes to the amplitudes measured in the conjugate
//! experiment.

mod discrete;
mod hermite;
mod quadrature;

pub use discrete::{dft_unitary, unitarity_error, DiscreteBasis, RegisterTransform};
pub use hermite::{hermite_function, hermite_functions};
pub use quadrature::GaussHermite;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::{Complex64, Error, Result};

/// Smallest quadrature order a basis uses regardless of its size.
pub const MIN_QUADRATURE_ORDER: usize = 64;

/// `(−i)ʲ`
pub(crate) fn minus_i_pow(j: usize) -> Complex64 {
    match j % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousBasis {
    size: usize,
    scale: f64,
    quadrature_order: usize,
}

impl ContinuousBasis {
    /// Unit-scale basis of `size` functions.
    pub fn new(size: usize) -> Result<Self> {
        Self::with_scale(size, 1.0)
    }

    pub fn with_scale(size: usize, scale: f64) -> Result<Self> {
        if size == 0 {
            return Err(invalid("basis size", "must be positive"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("basis scale", alloc::format!("{scale} is not a positive finite number")));
        }
        Ok(Self {
            size,
            scale,
            quadrature_order: MIN_QUADRATURE_ORDER.max(2 * size + 1),
        })
    }

    /// Overrides the Gauss–Hermite order; it must be at least `2s + 1`.
    pub fn with_quadrature_order(mut self, order: usize) -> Result<Self> {
        if order < 2 * self.size + 1 {
            return Err(invalid(
                "quadrature order",
                alloc::format!("{order} is below 2s+1 = {}", 2 * self.size + 1),
            ));
        }
        self.quadrature_order = order;
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    /// Same scale and quadrature policy, different size.
    pub fn resized(&self, size: usize) -> Result<Self> {
        Self::with_scale(size, self.scale)
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.size {
            return Err(Error::IndexOutOfRange {
                index: j,
                size: self.size,
            });
        }
        Ok(())
    }

    /// `φⱼ(x)`.
    pub fn phi(&self, j: usize, x: f64) -> Result<f64> {
        self.check_index(j)?;
        Ok(hermite_function(j, x / self.scale) / self.scale.sqrt())
    }

    /// `φ̃ⱼ(p)`.
    pub fn phi_tilde(&self, j: usize, p: f64) -> Result<Complex64> {
        self.check_index(j)?;
        Ok(minus_i_pow(j) * (hermite_function(j, p * self.scale) * self.scale.sqrt()))
    }

    /// All `φⱼ(x)` for `j < s`.
    pub fn phi_row(&self, x: f64) -> Vec<f64> {
        let amp = 1.0 / self.scale.sqrt();
        let mut row = hermite_functions(x / self.scale, self.size);
        row.iter_mut().for_each(|v| *v *= amp);
        row
    }

    /// All `φ̃ⱼ(p)` for `j < s`.
    pub fn phi_tilde_row(&self, p: f64) -> Vec<Complex64> {
        let amp = self.scale.sqrt();
        hermite_functions(p * self.scale, self.size)
            .into_iter()
            .enumerate()
            .map(|(j, h)| minus_i_pow(j) * (h * amp))
            .collect()
    }

    /// The Gauss–Hermite rule of this basis' order, in the reduced variable
    /// `t = x / a`.
    pub fn quadrature(&self) -> Result<GaussHermite> {
        GaussHermite::new(self.quadrature_order)
    }

    /// `(node, weight)` pairs of the `e^{−t²}` rule.
    pub fn quadrature_nodes(&self) -> Result<Vec<(f64, f64)>> {
        Ok(self.quadrature()?.pairs())
    }

    /// Quadrature mapped to coordinate space with the basis tabulated at the
    /// nodes.
    pub fn coordinate_quadrature(&self) -> Result<BasisQuadrature> {
        BasisQuadrature::new(self)
    }
}

/// Coordinate-space quadrature for integrals of the form
/// `∫ φₖ(x) g(x) φⱼ(x) dx` and `∫ f(x) dx` with `f` a polynomial times the
/// basis' Gaussian envelope.
#[derive(Debug, Clone)]
pub struct BasisQuadrature {
    points: Vec<f64>,
    line_weights: Vec<f64>,
    /// Row-major `points.len() × s` table of `φⱼ(x_q)`.
    table: Vec<f64>,
    size: usize,
}

impl BasisQuadrature {
    fn new(basis: &ContinuousBasis) -> Result<Self> {
        let rule = basis.quadrature()?;
        let a = basis.scale;
        let points: Vec<f64> = rule.nodes().iter().map(|t| a * t).collect();
        let line_weights = rule.reduced_weights().iter().map(|w| a * w).collect();
        let mut table = Vec::with_capacity(points.len() * basis.size);
        for &x in &points {
            table.extend(basis.phi_row(x));
        }
        Ok(Self {
            points,
            line_weights,
            table,
            size: basis.size,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Weights for `∫ f(x) dx`.
    pub fn line_weights(&self) -> &[f64] {
        &self.line_weights
    }

    /// `φ₀(x_q), …, φ_{s−1}(x_q)`.
    pub fn phi_at(&self, q: usize) -> &[f64] {
        &self.table[q * self.size..(q + 1) * self.size]
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.line_weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Matrix `Mₖⱼ = ∫ φₖ(x) g(x, j) φⱼ(x) dx`, row-major `s × s`.
    pub fn matrix_elements<F: FnMut(f64, usize) -> f64>(&self, mut g: F) -> Vec<f64> {
        let s = self.size;
        let mut out = alloc::vec![0.0; s * s];
        for (q, (&x, &w)) in self.points.iter().zip(&self.line_weights).enumerate() {
            let row = self.phi_at(q);
            for j in 0..s {
                let gj = w * g(x, j) * row[j];
                if gj == 0.0 {
                    continue;
                }
                for k in 0..s {
                    out[k * s + j] += row[k] * gj;
                }
            }
        }
        out
    }
}
