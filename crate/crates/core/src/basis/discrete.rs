#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::invalid;
use crate::{Complex64, Result};

/// Which unitary a register basis uses for its conjugate measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterTransform {
    Dft,
    Custom,
}

/// Register basis with conjugate transform `U` (`c̃ = U c`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBasis {
    unitary: DMatrix<Complex64>,
    transform: RegisterTransform,
}

/// Tolerance for accepting a user-supplied unitary.
const UNITARY_TOLERANCE: f64 = 1e-10;

impl DiscreteBasis {
    /// Wraps an arbitrary unitary matrix, checking `U U† = I` entrywise.
    pub fn new(unitary: DMatrix<Complex64>) -> Result<Self> {
        let (rows, cols) = unitary.shape();
        if rows == 0 || rows != cols {
            return Err(invalid("unitary", alloc::format!("shape {rows}x{cols} is not square and nonempty")));
        }
        let err = unitarity_error(&unitary);
        if err > UNITARY_TOLERANCE {
            return Err(invalid("unitary", alloc::format!("U U† deviates from identity by {err:e}")));
        }
        Ok(Self {
            unitary,
            transform: RegisterTransform::Custom,
        })
    }

    pub fn dimension(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn unitary(&self) -> &DMatrix<Complex64> {
        &self.unitary
    }

    pub fn transform(&self) -> RegisterTransform {
        self.transform
    }

    /// Row `j` of `U` as a slice-friendly vector.
    pub(crate) fn row(&self, j: usize) -> Vec<Complex64> {
        self.unitary.row(j).iter().copied().collect()
    }
}

/// Max-entry deviation of `U U†` from the identity.
pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let product = u * u.adjoint();
    let n = u.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((product[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Discrete Fourier transform register: `U_{jk} = e^{2πi jk/s} / √s`.
pub fn dft_unitary(dimension: usize) -> Result<DiscreteBasis> {
    if dimension == 0 {
        return Err(invalid("dimension", "must be positive"));
    }
    let norm = 1.0 / (dimension as f64).sqrt();
    // Reduce jk mod s first so the phase argument stays small.
    let unitary = DMatrix::from_fn(dimension, dimension, |j, k| {
        let r = (j * k) % dimension;
        let angle = 2.0 * core::f64::consts::PI * r as f64 / dimension as f64;
        Complex64::new(angle.cos() * norm, angle.sin() * norm)
    });
    Ok(DiscreteBasis {
        unitary,
        transform: RegisterTransform::Dft,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_dimension() {
        let b = dft_unitary(1).unwrap();
        assert_eq!(b.unitary()[(0, 0)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn two_dimensional_is_hadamard() {
        let b = dft_unitary(2).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let expected = [[r, r], [r, -r]];
        for (j, row) in expected.iter().enumerate() {
            for (k, want) in row.iter().enumerate() {
                let z = b.unitary()[(j, k)];
                assert!((z.re - want).abs() < 1e-15 && z.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unitary_for_many_sizes() {
        for s in [1, 2, 3, 7, 16, 64, 256] {
            assert!(unitarity_error(dft_unitary(s).unwrap().unitary()) < 1e-12, "s = {s}");
        }
    }

    #[test]
    fn rejects_zero_and_non_unitary() {
        assert!(dft_unitary(0).is_err());
        let bad = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(DiscreteBasis::new(bad).is_err());
        let ok = DiscreteBasis::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(ok.transform(), RegisterTransform::Custom);
    }
}
