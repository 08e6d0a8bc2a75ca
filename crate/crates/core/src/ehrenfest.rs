//! Averaged equations of motion for root expansions with harmonic time
//! dependence.
//!
//! For `ψ(x, t) = Σ cⱼ e^{−iωⱼt} φⱼ(x)` the requirement
//! `m d²⟨x⟩/dt² = −⟨∂U/∂x⟩`, imposed for every choice of the amplitudes and
//! at every instant, is equivalent to the matrix identity
//!
//! ```text
//! m (ωⱼ − ωₖ)² ⟨k|x|j⟩ = ⟨k|∂U/∂x|j⟩    for all k, j
//! ```
//!
//! so checking this identity checks the equation of motion on the whole span
//! of the basis. It holds when the `φⱼ` are eigenfunctions of
//! `H = −(1/2m) ∂² + U` with eigenvalues `ωⱼ` (`ℏ = 1`).

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use crate::basis::ContinuousBasis;
use crate::error::invalid;
use crate::{Error, Result};

/// Default bound on `max |residual|`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Default bound on the leading-block Hamiltonian deviation.
pub const HAMILTONIAN_TOLERANCE: f64 = 1e-8;
/// Trailing rows and columns excluded from the Hamiltonian comparison.
pub const TRUNCATION_BUFFER: usize = 2;

pub trait Potential {
    fn value(&self, x: f64) -> f64;
    fn gradient(&self, x: f64) -> f64;
}

/// Potentials offered on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CatalogPotential {
    /// `U = k x²/2`.
    Harmonic { stiffness: f64 },
    /// `U = g x⁴`.
    Quartic { coupling: f64 },
    Free,
}

impl CatalogPotential {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Harmonic { .. } => "harmonic",
            Self::Quartic { .. } => "quartic",
            Self::Free => "free",
        }
    }
}

impl Potential for CatalogPotential {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Self::Harmonic { stiffness } => 0.5 * stiffness * x * x,
            Self::Quartic { coupling } => coupling * x * x * x * x,
            Self::Free => 0.0,
        }
    }

    fn gradient(&self, x: f64) -> f64 {
        match *self {
            Self::Harmonic { stiffness } => stiffness * x,
            Self::Quartic { coupling } => 4.0 * coupling * x * x * x,
            Self::Free => 0.0,
        }
    }
}

/// A potential given by two closures.
pub struct FnPotential<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V: Fn(f64) -> f64, G: Fn(f64) -> f64> Potential for FnPotential<V, G> {
    fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: f64) -> f64 {
        (self.gradient)(x)
    }
}

/// Oscillator frequencies `ω (j + ½)` with `ω = √(k/m)`.
pub fn harmonic_frequencies(size: usize, mass: f64, stiffness: f64) -> Vec<f64> {
    let omega = (stiffness / mass).sqrt();
    (0..size).map(|j| omega * (j as f64 + 0.5)).collect()
}

/// Hermite basis made of the oscillator eigenfunctions, scale `(m k)^{−1/4}`.
pub fn harmonic_basis(size: usize, mass: f64, stiffness: f64) -> Result<ContinuousBasis> {
    if !(mass > 0.0 && stiffness > 0.0) {
        return Err(invalid("harmonic basis", "mass and stiffness must be positive"));
    }
    ContinuousBasis::with_scale(size, (mass * stiffness).powf(-0.25))
}

pub struct EhrenfestProblem<P> {
    mass: f64,
    potential: P,
    frequencies: Vec<f64>,
    basis: ContinuousBasis,
}

impl<P: Potential> EhrenfestProblem<P> {
    pub fn new(mass: f64, potential: P, frequencies: Vec<f64>, basis: ContinuousBasis) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("mass", "must be positive and finite"));
        }
        if frequencies.len() != basis.size() {
            return Err(Error::DimensionMismatch {
                expected: basis.size(),
                found: frequencies.len(),
            });
        }
        if frequencies.iter().any(|w| !w.is_finite()) {
            return Err(invalid("frequencies", "must be finite"));
        }
        Ok(Self {
            mass,
            potential,
            frequencies,
            basis,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn potential(&self) -> &P {
        &self.potential
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn basis(&self) -> &ContinuousBasis {
        &self.basis
    }

    pub fn size(&self) -> usize {
        self.basis.size()
    }

    /// `⟨k|∂U/∂x|j⟩`, row-major.
    pub fn gradient_matrix(&self) -> Result<Vec<f64>> {
        let quad = self.basis.coordinate_quadrature()?;
        Ok(symmetrized(quad.matrix_elements(|x, _| self.potential.gradient(x)), self.size()))
    }

    pub fn gradient_matrix_element(&self, k: usize, j: usize) -> Result<f64> {
        let s = self.size();
        check_index(k, s)?;
        check_index(j, s)?;
        Ok(self.gradient_matrix()?[k * s + j])
    }

    /// `m (ωⱼ − ωₖ)² ⟨k|x|j⟩ − ⟨k|∂U/∂x|j⟩`, row-major.
    pub fn heisenberg_residual(&self) -> Result<Vec<f64>> {
        let s = self.size();
        let x = position_matrix(&self.basis)?;
        let g = self.gradient_matrix()?;
        let w = &self.frequencies;
        let mut out = alloc::vec![0.0; s * s];
        for k in 0..s {
            for j in 0..s {
                let d = w[j] - w[k];
                out[k * s + j] = self.mass * d * d * x[k * s + j] - g[k * s + j];
            }
        }
        Ok(out)
    }

    /// `Hₖⱼ = ∫ φₖ (−φⱼ''/(2m) + U φⱼ) dx`, row-major, using
    /// `φⱼ'' = a⁻² ((x/a)² − (2j + 1)) φⱼ`.
    pub fn hamiltonian_matrix(&self) -> Result<Vec<f64>> {
        let quad = self.basis.coordinate_quadrature()?;
        let a = self.basis.scale();
        let kinetic = 1.0 / (2.0 * self.mass * a * a);
        Ok(quad.matrix_elements(|x, j| {
            let t = x / a;
            -kinetic * (t * t - (2 * j + 1) as f64) + self.potential.value(x)
        }))
    }

    /// Largest entry of `H − diag(ω)` on the leading
    /// `(s − TRUNCATION_BUFFER)` block.
    pub fn hamiltonian_deviation(&self) -> Result<f64> {
        let s = self.size();
        let h = self.hamiltonian_matrix()?;
        let lead = s.saturating_sub(TRUNCATION_BUFFER).max(1);
        let mut worst = 0.0f64;
        for k in 0..lead {
            for j in 0..lead {
                let target = if k == j { self.frequencies[j] } else { 0.0 };
                worst = worst.max((h[k * s + j] - target).abs());
            }
        }
        Ok(worst)
    }

    pub fn check(&self) -> Result<EhrenfestReport> {
        self.check_with(RESIDUAL_TOLERANCE, HAMILTONIAN_TOLERANCE)
    }

    pub fn check_with(&self, tolerance: f64, hamiltonian_tolerance: f64) -> Result<EhrenfestReport> {
        let s = self.size();
        let flat = self.heisenberg_residual()?;
        let max_residual = flat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let residual_matrix = flat.chunks(s).map(<[f64]>::to_vec).collect();
        let hamiltonian_deviation = self.hamiltonian_deviation()?;
        Ok(EhrenfestReport {
            max_residual,
            residual_matrix,
            hamiltonian_deviation,
            tolerance,
            hamiltonian_tolerance,
            pass: max_residual < tolerance && hamiltonian_deviation < hamiltonian_tolerance,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EhrenfestReport {
    pub max_residual: f64,
    pub residual_matrix: Vec<Vec<f64>>,
    pub hamiltonian_deviation: f64,
    pub tolerance: f64,
    pub hamiltonian_tolerance: f64,
    pub pass: bool,
}

fn check_index(index: usize, size: usize) -> Result<()> {
    if index >= size {
        return Err(Error::IndexOutOfRange { index, size });
    }
    Ok(())
}

/// `⟨k|x|j⟩`, row-major.
pub fn position_matrix(basis: &ContinuousBasis) -> Result<Vec<f64>> {
    Ok(symmetrized(basis.coordinate_quadrature()?.matrix_elements(|x, _| x), basis.size()))
}

/// Removes the rounding asymmetry of a real symmetric matrix.
fn symmetrized(mut m: Vec<f64>, s: usize) -> Vec<f64> {
    for k in 0..s {
        for j in k + 1..s {
            let mean = 0.5 * (m[k * s + j] + m[j * s + k]);
            m[k * s + j] = mean;
            m[j * s + k] = mean;
        }
    }
    m
}

pub fn position_matrix_element(basis: &ContinuousBasis, k: usize, j: usize) -> Result<f64> {
    let s = basis.size();
    check_index(k, s)?;
    check_index(j, s)?;
    Ok(position_matrix(basis)?[k * s + j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn oscillator(size: usize) -> EhrenfestProblem<CatalogPotential> {
        EhrenfestProblem::new(
            1.0,
            CatalogPotential::Harmonic { stiffness: 1.0 },
            harmonic_frequencies(size, 1.0, 1.0),
            harmonic_basis(size, 1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn position_elements() {
        let b = ContinuousBasis::new(6).unwrap();
        assert!(position_matrix_element(&b, 0, 0).unwrap().abs() < 1e-15);
        assert!((position_matrix_element(&b, 0, 1).unwrap() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        assert!(position_matrix_element(&b, 0, 3).unwrap().abs() < 1e-15);
        assert!((position_matrix_element(&b, 3, 4).unwrap() - 2.0f64.sqrt()).abs() < 1e-13);
        assert_eq!(
            position_matrix_element(&b, 6, 0),
            Err(Error::IndexOutOfRange { index: 6, size: 6 })
        );
    }

    #[test]
    fn gradient_elements() {
        let s = 5;
        let b = ContinuousBasis::new(s).unwrap();
        let w = vec![0.0; s];
        let harmonic = EhrenfestProblem::new(1.0, CatalogPotential::Harmonic { stiffness: 1.0 }, w.clone(), b).unwrap();
        let x = position_matrix(&b).unwrap();
        assert_eq!(harmonic.gradient_matrix().unwrap(), x);

        let flat = FnPotential {
            value: |_| 3.0,
            gradient: |_| 0.0,
        };
        let constant = EhrenfestProblem::new(1.0, flat, w.clone(), b).unwrap();
        assert!(constant.gradient_matrix().unwrap().iter().all(|&v| v == 0.0));

        // ⟨0|x³|1⟩ = 3/(2√2).
        let quartic = EhrenfestProblem::new(1.0, CatalogPotential::Quartic { coupling: 1.0 }, w, b).unwrap();
        assert!((quartic.gradient_matrix_element(0, 1).unwrap() - 3.0 * 2.0f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn oscillator_satisfies_quantization() {
        let p = oscillator(22);
        let r = p.heisenberg_residual().unwrap();
        let s = 22;
        for k in 0..20 {
            for j in 0..20 {
                assert!(r[k * s + j].abs() < 1e-10, "({k},{j}) = {}", r[k * s + j]);
                assert_eq!(r[k * s + j], r[j * s + k]);
            }
        }
        let report = p.check().unwrap();
        assert!(report.pass);
        assert!(report.hamiltonian_deviation < 1e-8);
    }

    #[test]
    fn wrong_frequencies_are_detected() {
        let b = ContinuousBasis::new(4).unwrap();
        let doubled: Vec<f64> = (0..4).map(|j| 2.0 * j as f64).collect();
        let p = EhrenfestProblem::new(1.0, CatalogPotential::Harmonic { stiffness: 1.0 }, doubled, b).unwrap();
        let r = p.heisenberg_residual().unwrap();
        assert!((r[1] - 3.0 * core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-13);
        let report = p.check().unwrap();
        assert!(!report.pass);
        assert!(report.hamiltonian_deviation >= 0.5);

        let mut nudged = harmonic_frequencies(20, 1.0, 1.0);
        nudged[7] += 1e-3;
        let p = EhrenfestProblem::new(1.0, CatalogPotential::Harmonic { stiffness: 1.0 }, nudged, harmonic_basis(20, 1.0, 1.0).unwrap()).unwrap();
        assert!(p.check().unwrap().max_residual > 1e-4);
    }

    #[test]
    fn free_particle() {
        let b = ContinuousBasis::new(6).unwrap();
        let equal = EhrenfestProblem::new(1.0, CatalogPotential::Free, vec![0.7; 6], b).unwrap();
        assert_eq!(equal.check().unwrap().max_residual, 0.0);
        let ladder = EhrenfestProblem::new(1.0, CatalogPotential::Free, harmonic_frequencies(6, 1.0, 1.0), b).unwrap();
        let report = ladder.check().unwrap();
        assert!(!report.pass);
        assert!(report.max_residual > 1.0);
    }

    #[test]
    fn shift_moves_diagonal_uniformly() {
        let s = 8;
        let basis = harmonic_basis(s, 1.0, 1.0).unwrap();
        let plain = oscillator(s).hamiltonian_matrix().unwrap();
        let shifted = EhrenfestProblem::new(
            1.0,
            FnPotential {
                value: |x: f64| 0.5 * x * x + 2.5,
                gradient: |x: f64| x,
            },
            harmonic_frequencies(s, 1.0, 1.0),
            basis,
        )
        .unwrap()
        .hamiltonian_matrix()
        .unwrap();
        for k in 0..s {
            for j in 0..s {
                let shift = if k == j { 2.5 } else { 0.0 };
                assert!((shifted[k * s + j] - plain[k * s + j] - shift).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oscillator_with_mass_and_stiffness() {
        let (m, k, s) = (2.0, 0.5, 12);
        let p = EhrenfestProblem::new(
            m,
            CatalogPotential::Harmonic { stiffness: k },
            harmonic_frequencies(s, m, k),
            harmonic_basis(s, m, k).unwrap(),
        )
        .unwrap();
        assert!(p.check().unwrap().pass);
    }

    #[test]
    fn rejects_bad_problems() {
        let b = ContinuousBasis::new(3).unwrap();
        assert!(EhrenfestProblem::new(0.0, CatalogPotential::Free, vec![0.0; 3], b).is_err());
        assert!(EhrenfestProblem::new(1.0, CatalogPotential::Free, vec![0.0; 2], b).is_err());
        assert!(EhrenfestProblem::new(1.0, CatalogPotential::Free, vec![f64::NAN; 3], b).is_err());
    }
}
