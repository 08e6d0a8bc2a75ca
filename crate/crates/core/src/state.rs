//! State vectors and the quantities derived from them.
//!
//! A [`StateVector`] is always unit norm and gauge fixed: the
//! largest-magnitude coefficient (lowest index on ties) is real and
//! nonnegative. Two vectors that differ only by a global phase therefore
//! compare equal after construction.

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{ContinuousBasis, DiscreteBasis, RegisterTransform};
use crate::error::invalid;
use crate::{Complex64, Error, Result};

/// Inputs this close to unit norm are accepted as is.
pub const NORM_TOLERANCE: f64 = 1e-12;
/// Inputs farther than this from unit norm are rejected; in between they are
/// renormalized and the original norm is recorded.
pub const NORM_REJECT_THRESHOLD: f64 = 1e-6;

/// Which basis a state's coefficients refer to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisTag {
    Hermite { scale: f64 },
    Register { transform: RegisterTransform },
}

impl BasisTag {
    pub fn of_continuous(basis: &ContinuousBasis) -> Self {
        BasisTag::Hermite {
            scale: basis.scale(),
        }
    }

    pub fn of_discrete(basis: &DiscreteBasis) -> Self {
        BasisTag::Register {
            transform: basis.transform(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    coefficients: Vec<Complex64>,
    basis: BasisTag,
    renormalized_from: Option<f64>,
}

impl StateVector {
    /// Builds a state from coefficients that should already be normalized.
    pub fn new(coefficients: Vec<Complex64>, basis: BasisTag) -> Result<Self> {
        let norm_sqr = checked_norm_sqr(&coefficients)?;
        let deviation = (norm_sqr - 1.0).abs();
        if deviation > NORM_REJECT_THRESHOLD {
            return Err(Error::NotNormalized { norm_sqr });
        }
        let renormalized_from = (deviation > NORM_TOLERANCE).then_some(norm_sqr);
        let mut state = Self::from_raw(coefficients, basis, norm_sqr);
        state.renormalized_from = renormalized_from;
        Ok(state)
    }

    /// Scales any nonzero vector to unit norm.
    pub fn normalized(coefficients: Vec<Complex64>, basis: BasisTag) -> Result<Self> {
        let norm_sqr = checked_norm_sqr(&coefficients)?;
        if norm_sqr == 0.0 {
            return Err(Error::NotNormalized { norm_sqr });
        }
        Ok(Self::from_raw(coefficients, basis, norm_sqr))
    }

    /// Real coefficients, scaled to unit norm.
    pub fn from_real(coefficients: &[f64], basis: BasisTag) -> Result<Self> {
        Self::normalized(
            coefficients.iter().map(|&c| Complex64::new(c, 0.0)).collect(),
            basis,
        )
    }

    /// The basis vector `e_index` of a length-`size` state.
    pub fn basis_state(size: usize, index: usize, basis: BasisTag) -> Result<Self> {
        if index >= size {
            return Err(Error::IndexOutOfRange { index, size });
        }
        let mut c = alloc::vec![Complex64::new(0.0, 0.0); size];
        c[index] = Complex64::new(1.0, 0.0);
        Self::new(c, basis)
    }

    /// Haar-random state: iid complex Gaussian coefficients, normalized.
    pub fn random<R: Rng + ?Sized>(size: usize, basis: BasisTag, rng: &mut R) -> Result<Self> {
        let c = (0..size)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(c, basis)
    }

    /// Uniformly random direction on the real unit sphere.
    pub fn random_real<R: Rng + ?Sized>(size: usize, basis: BasisTag, rng: &mut R) -> Result<Self> {
        let c: Vec<f64> = (0..size).map(|_| rng.sample(StandardNormal)).collect();
        Self::from_real(&c, basis)
    }

    fn from_raw(mut coefficients: Vec<Complex64>, basis: BasisTag, norm_sqr: f64) -> Self {
        let inv = 1.0 / norm_sqr.sqrt();
        coefficients.iter_mut().for_each(|c| *c *= inv);
        fix_gauge(&mut coefficients);
        Self {
            coefficients,
            basis,
            renormalized_from: None,
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn basis_tag(&self) -> BasisTag {
        self.basis
    }

    /// Original `Σ|cᵢ|²` when construction had to renormalize.
    pub fn renormalized_from(&self) -> Option<f64> {
        self.renormalized_from
    }

    /// Whether every imaginary part is within `tolerance` of zero.
    pub fn is_real(&self, tolerance: f64) -> bool {
        self.coefficients.iter().all(|c| c.im.abs() <= tolerance)
    }

    /// Real parts of the coefficients.
    pub fn real_parts(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.re).collect()
    }

    fn check_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.len(),
            });
        }
        Ok(())
    }

    fn check_continuous(&self, basis: &ContinuousBasis) -> Result<()> {
        if !matches!(self.basis, BasisTag::Hermite { .. }) {
            return Err(invalid("basis", "register state used with a continuous basis"));
        }
        self.check_len(basis.size())
    }

    /// `ψ(x) = Σ cⱼ φⱼ(x)`.
    pub fn amplitude_at(&self, basis: &ContinuousBasis, x: f64) -> Result<Complex64> {
        self.check_continuous(basis)?;
        Ok(basis
            .phi_row(x)
            .iter()
            .zip(&self.coefficients)
            .map(|(&phi, &c)| c * phi)
            .sum())
    }

    /// `ψ̃(p) = Σ cⱼ φ̃ⱼ(p)`.
    pub fn momentum_amplitude_at(&self, basis: &ContinuousBasis, p: f64) -> Result<Complex64> {
        self.check_continuous(basis)?;
        Ok(basis
            .phi_tilde_row(p)
            .iter()
            .zip(&self.coefficients)
            .map(|(&phi, &c)| c * phi)
            .sum())
    }

    /// `P(x) = |ψ(x)|²`.
    pub fn density_at(&self, basis: &ContinuousBasis, x: f64) -> Result<f64> {
        Ok(self.amplitude_at(basis, x)?.norm_sqr())
    }

    /// `P̃(p) = |ψ̃(p)|²`.
    pub fn momentum_density_at(&self, basis: &ContinuousBasis, p: f64) -> Result<f64> {
        Ok(self.momentum_amplitude_at(basis, p)?.norm_sqr())
    }

    /// `c̃ = U c`.
    pub fn conjugate_amplitudes(&self, basis: &DiscreteBasis) -> Result<Vec<Complex64>> {
        self.check_len(basis.dimension())?;
        let c = DVector::from_column_slice(&self.coefficients);
        Ok((basis.unitary() * c).iter().copied().collect())
    }

    /// Pure-state density matrix `ρ = c c†`.
    pub fn density_matrix(&self) -> DensityMatrix {
        let c = DVector::from_column_slice(&self.coefficients);
        DensityMatrix {
            entries: &c * c.adjoint(),
        }
    }
}

fn checked_norm_sqr(c: &[Complex64]) -> Result<f64> {
    if c.is_empty() {
        return Err(invalid("state", "no coefficients"));
    }
    if c.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(invalid("state", "non-finite coefficient"));
    }
    Ok(c.iter().map(|z| z.norm_sqr()).sum())
}

/// Rotates the global phase so the largest-magnitude entry (first on ties)
/// is real and nonnegative.
pub(crate) fn fix_gauge(c: &mut [Complex64]) {
    let mut pivot = 0;
    let mut best = -1.0;
    for (i, z) in c.iter().enumerate() {
        let m = z.norm_sqr();
        if m > best {
            best = m;
            pivot = i;
        }
    }
    let magnitude = c[pivot].norm();
    if magnitude == 0.0 {
        return;
    }
    let rotation = c[pivot].conj() / magnitude;
    c.iter_mut().for_each(|z| *z *= rotation);
    c[pivot] = Complex64::new(magnitude, 0.0);
}

/// `|(a, b)|² = |Σ aᵢ* bᵢ|²`, clamped to `[0, 1]`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    b.check_len(a.len())?;
    Ok(overlap(a.coefficients(), b.coefficients()).norm_sqr().min(1.0))
}

/// `Σ aᵢ* bᵢ`.
pub(crate) fn overlap(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Pure-state density matrix `ρᵢⱼ = cᵢ cⱼ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// Max-entry deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let diff = &self.entries - self.entries.adjoint();
        diff.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// Max-entry deviation of `ρ² − ρ`.
    pub fn idempotence_error(&self) -> f64 {
        let diff = &self.entries * &self.entries - &self.entries;
        diff.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::dft_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const HERMITE: BasisTag = BasisTag::Hermite { scale: 1.0 };
    const INV_SQRT2: f64 = core::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn norm_policy() {
        assert!(matches!(
            StateVector::new(alloc::vec![c(1.1, 0.0)], HERMITE),
            Err(Error::NotNormalized { .. })
        ));
        let drift = StateVector::new(alloc::vec![c(1.0 + 1e-9, 0.0)], HERMITE).unwrap();
        assert!(drift.renormalized_from().is_some());
        assert_eq!(drift.coefficients()[0], c(1.0, 0.0));
        let exact = StateVector::new(alloc::vec![c(0.6, 0.0), c(0.0, 0.8)], HERMITE).unwrap();
        assert!(exact.renormalized_from().is_none());
    }

    #[test]
    fn gauge_makes_largest_real_positive() {
        let s = StateVector::new(alloc::vec![c(0.0, 0.6), c(0.0, -0.8)], HERMITE).unwrap();
        assert_eq!(s.coefficients()[1], c(0.8, 0.0));
        assert!((s.coefficients()[0] - c(-0.6, 0.0)).norm() < 1e-15);
        // Ties go to the lowest index.
        let t = StateVector::new(alloc::vec![c(0.0, INV_SQRT2), c(INV_SQRT2, 0.0)], HERMITE).unwrap();
        assert_eq!(t.coefficients()[0].im, 0.0);
        assert!(t.coefficients()[0].re > 0.0);
    }

    #[test]
    fn ground_state_density() {
        let b = ContinuousBasis::new(3).unwrap();
        let s = StateVector::basis_state(3, 0, HERMITE).unwrap();
        let expected = 1.0 / core::f64::consts::PI.sqrt();
        assert!((s.density_at(&b, 0.0).unwrap() - expected).abs() < 1e-15);
        assert!((s.momentum_density_at(&b, 0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn cross_term_vanishes_at_origin() {
        let b = ContinuousBasis::new(2).unwrap();
        let s = StateVector::new(alloc::vec![c(INV_SQRT2, 0.0), c(0.0, INV_SQRT2)], HERMITE).unwrap();
        let h0 = b.phi(0, 0.0).unwrap();
        assert!((s.density_at(&b, 0.0).unwrap() - 0.5 * h0 * h0).abs() < 1e-15);
    }

    #[test]
    fn densities_integrate_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = ContinuousBasis::with_scale(7, 1.3).unwrap();
        let q = b.coordinate_quadrature().unwrap();
        // Momentum functions have scale 1/a, so integrate them on their own grid.
        let bp = ContinuousBasis::with_scale(7, 1.0 / 1.3).unwrap();
        let qp = bp.coordinate_quadrature().unwrap();
        for _ in 0..5 {
            let s = StateVector::random(7, BasisTag::of_continuous(&b), &mut rng).unwrap();
            let mass = q.integrate(|x| s.density_at(&b, x).unwrap());
            let pmass = qp.integrate(|p| s.momentum_density_at(&b, p).unwrap());
            assert!((mass - 1.0).abs() < 1e-10);
            assert!((pmass - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn real_even_state_has_symmetric_momentum_density() {
        let b = ContinuousBasis::new(5).unwrap();
        let s = StateVector::from_real(&[0.7, 0.0, 0.5, 0.0, -0.3], HERMITE).unwrap();
        for p in [0.3, 1.1, 2.7] {
            let l = s.momentum_density_at(&b, -p).unwrap();
            let r = s.momentum_density_at(&b, p).unwrap();
            assert!((l - r).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let b = ContinuousBasis::new(3).unwrap();
        let s = StateVector::basis_state(2, 0, HERMITE).unwrap();
        assert_eq!(
            s.density_at(&b, 0.0),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        );
        let d = dft_unitary(4).unwrap();
        assert!(s.conjugate_amplitudes(&d).is_err());
    }

    #[test]
    fn dft_of_first_basis_state() {
        let d = dft_unitary(2).unwrap();
        let tag = BasisTag::of_discrete(&d);
        let s = StateVector::basis_state(2, 0, tag).unwrap();
        let ct = s.conjugate_amplitudes(&d).unwrap();
        for z in ct {
            assert!((z - c(INV_SQRT2, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn identity_transform_is_identity() {
        let d = DiscreteBasis::new(DMatrix::identity(3, 3)).unwrap();
        let s = StateVector::new(alloc::vec![c(0.6, 0.0), c(0.0, 0.48), c(0.0, 0.64)], BasisTag::of_discrete(&d))
            .unwrap();
        assert_eq!(s.conjugate_amplitudes(&d).unwrap(), s.coefficients());
    }

    #[test]
    fn fidelity_cases() {
        let a = StateVector::basis_state(3, 0, HERMITE).unwrap();
        let b = StateVector::basis_state(3, 2, HERMITE).unwrap();
        assert_eq!(fidelity(&a, &a).unwrap(), 1.0);
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
        let short = StateVector::basis_state(2, 0, HERMITE).unwrap();
        assert!(fidelity(&a, &short).is_err());
    }

    #[test]
    fn density_matrix_examples() {
        let s = StateVector::new(alloc::vec![c(1.0, 0.0), c(0.0, 0.0)], HERMITE).unwrap();
        let rho = s.density_matrix();
        assert_eq!(rho.entries()[(0, 0)], c(1.0, 0.0));
        assert_eq!(rho.entries()[(1, 1)], c(0.0, 0.0));
        let plus = StateVector::new(alloc::vec![c(INV_SQRT2, 0.0), c(INV_SQRT2, 0.0)], HERMITE).unwrap();
        for z in plus.density_matrix().entries().iter() {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn density_matrix_is_rank_one_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in [2, 5, 16] {
            let st = StateVector::random(s, HERMITE, &mut rng).unwrap();
            let rho = st.density_matrix();
            assert!(rho.hermiticity_error() < 1e-12);
            assert!((rho.trace() - c(1.0, 0.0)).norm() < 1e-12);
            assert!(rho.idempotence_error() < 1e-10);
            let ev = rho.eigenvalues();
            assert!((ev[0] - 1.0).abs() < 1e-10);
            assert!(ev[1].abs() < 1e-10);
        }
    }
}
