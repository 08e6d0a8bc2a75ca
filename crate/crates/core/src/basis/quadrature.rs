//! Gauss–Hermite quadrature.
//!
//! Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix
//! (zero diagonal, off-diagonal `√(k/2)`), polished by Newton steps on the
//! normalized Hermite function. Weights come from the Christoffel–Darboux
//! identity `wᵢ e^{tᵢ²} = 1 / (N h_{N−1}(tᵢ)²)`, which avoids eigenvectors and
//! keeps the reduced weights finite for large orders.

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use super::hermite::{hermite_function, newton_ratio};
use crate::error::invalid;
use crate::linalg::tridiagonal_eigenvalues;
use crate::Result;

/// An `N`-point Gauss–Hermite rule for `∫ e^{−t²} f(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    reduced_weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(invalid("quadrature order", "must be at least 2"));
        }
        let mut nodes = alloc::vec![0.0; order];
        let off: Vec<f64> = (1..order).map(|k| (k as f64 / 2.0).sqrt()).collect();
        tridiagonal_eigenvalues(&mut nodes, &off)?;
        nodes.sort_by(|a, b| a.total_cmp(b));

        for t in nodes.iter_mut() {
            for _ in 0..3 {
                let step = newton_ratio(order, *t);
                if !step.is_finite() {
                    break;
                }
                *t -= step;
                if step.abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
                    break;
                }
            }
        }
        // Exact symmetry about the origin.
        for i in 0..order / 2 {
            let j = order - 1 - i;
            let half = 0.5 * (nodes[j] - nodes[i]);
            nodes[i] = -half;
            nodes[j] = half;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }

        let reduced_weights: Vec<f64> = nodes
            .iter()
            .map(|&t| {
                let h = hermite_function(order - 1, t);
                1.0 / (order as f64 * h * h)
            })
            .collect();
        let weights = nodes
            .iter()
            .zip(&reduced_weights)
            .map(|(&t, &w)| w * (-t * t).exp())
            .collect();
        Ok(Self {
            nodes,
            weights,
            reduced_weights,
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for the `e^{−t²}` measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `wᵢ e^{tᵢ²}`: weights for integrating `f(t) dt` when `f` already
    /// carries a Gaussian factor.
    pub fn reduced_weights(&self) -> &[f64] {
        &self.reduced_weights
    }

    /// `(node, weight)` pairs.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.nodes
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .collect()
    }

    /// `∫ e^{−t²} f(t) dt`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    /// `∫ g(t) dt`, exact when `g(t) e^{t²}` is a polynomial of degree below
    /// `2N`.
    pub fn integrate_line<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.reduced_weights)
            .map(|(&t, &w)| w * g(t))
            .sum()
    }
}
