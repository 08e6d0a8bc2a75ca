//! Fisher information, covariance, confidence cones and chi-square tests
//! for estimated state vectors.
//!
//! With `c₀` eliminated through normalization, the Fisher information of `n`
//! observations in the real chart `(c₁, …, c_{s−1})` is
//! `4n(δᵢⱼ + cᵢcⱼ/c₀²)` whatever the basis. Its inverse, extended to all `s`
//! coordinates, is `(E − ρ)/(4n)`, so `4n(1 − |(ĉ, c)|²)` is asymptotically
//! `χ²` with `s − 1` degrees of freedom.

mod special;

pub use special::{
    chi2_cdf, chi2_density, chi2_quantile, chi2_survival, kolmogorov_survival, ks_test, ln_gamma,
    regularized_gamma_p, regularized_gamma_q,
};

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::basis::ContinuousBasis;
use crate::error::invalid;
use crate::state::{fidelity, fix_gauge, StateVector};
use crate::{Error, Result};

/// Charts with `c₀²` below this are singular.
pub const MIN_C0_SQR: f64 = 1e-12;
/// Imaginary parts up to this size still count as a real state.
pub const REAL_TOLERANCE: f64 = 1e-12;
/// Significance levels reported by every test.
pub const REPORT_LEVELS: [f64; 4] = [0.1, 0.05, 0.01, 0.001];
pub const HOMOGENEITY_NOTE: &str = "constructed, Monte Carlo calibrated";

/// Degrees of freedom of the fidelity statistic: `s − 1` for a real state,
/// `2s − 2` when both complementing experiments fix relative phases.
pub fn degrees_of_freedom(size: usize, complex: bool) -> usize {
    if complex {
        2 * size.saturating_sub(1)
    } else {
        size.saturating_sub(1)
    }
}

/// Real state with `c₀ = √(1 − Σ cᵢ²)` eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct RealStateChart {
    free: Vec<f64>,
}

impl RealStateChart {
    pub fn new(free: Vec<f64>) -> Result<Self> {
        if free.iter().any(|v| !v.is_finite()) {
            return Err(invalid("chart", "non-finite coordinate"));
        }
        let sum: f64 = free.iter().map(|v| v * v).sum();
        if sum >= 1.0 {
            return Err(invalid("chart", "Σ cᵢ² must be below 1"));
        }
        Ok(Self { free })
    }

    /// Chart of a real state, after flipping the global sign so `c₀ > 0`.
    pub fn from_state(state: &StateVector) -> Result<Self> {
        let mut c = state.coefficients().to_vec();
        fix_gauge(&mut c);
        if c.iter().any(|z| z.im.abs() > REAL_TOLERANCE) {
            return Err(invalid("state", "not real up to a global phase"));
        }
        let sign = if c[0].re < 0.0 { -1.0 } else { 1.0 };
        if c[0].re * c[0].re < MIN_C0_SQR {
            return Err(Error::SingularChart { c0_sqr: c[0].re * c[0].re });
        }
        Self::new(c[1..].iter().map(|z| sign * z.re).collect())
    }

    pub fn free_params(&self) -> &[f64] {
        &self.free
    }

    /// Dimension `s` of the full state.
    pub fn size(&self) -> usize {
        self.free.len() + 1
    }

    pub fn c0_sqr(&self) -> f64 {
        (1.0 - self.free.iter().map(|v| v * v).sum::<f64>()).max(0.0)
    }

    pub fn c0(&self) -> f64 {
        self.c0_sqr().sqrt()
    }

    /// `(c₀, c₁, …, c_{s−1})`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.size());
        c.push(self.c0());
        c.extend_from_slice(&self.free);
        c
    }

    fn checked_c0(&self) -> Result<f64> {
        let c0_sqr = self.c0_sqr();
        if c0_sqr < MIN_C0_SQR {
            return Err(Error::SingularChart { c0_sqr });
        }
        Ok(c0_sqr.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    entries: DMatrix<f64>,
    sample_size: u64,
}

impl FisherMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn sample_size(&self) -> u64 {
        self.sample_size
    }

    pub fn symmetry_error(&self) -> f64 {
        let d = &self.entries - self.entries.transpose();
        d.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest entrywise difference relative to the largest entry of `self`.
    pub fn relative_difference(&self, other: &FisherMatrix) -> f64 {
        let scale = self.entries.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let d = &self.entries - &other.entries;
        d.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale
    }

    pub fn is_positive_definite(&self) -> bool {
        self.entries.clone().cholesky().is_some()
    }
}

/// `Iᵢⱼ = 4n(δᵢⱼ + cᵢcⱼ/c₀²)`.
pub fn fisher_matrix_closed_form(chart: &RealStateChart, n: u64) -> Result<FisherMatrix> {
    let c0 = chart.checked_c0()?;
    let c = chart.free_params();
    let k = c.len();
    let four_n = 4.0 * n as f64;
    let entries = DMatrix::from_fn(k, k, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        four_n * (delta + c[i] * c[j] / (c0 * c0))
    });
    Ok(FisherMatrix {
        entries,
        sample_size: n,
    })
}

/// `Iᵢⱼ = 4n ∫ ∂ᵢψ ∂ⱼψ dx` with `∂ᵢψ = φᵢ − (cᵢ/c₀) φ₀`, by quadrature in
/// the given basis.
pub fn fisher_matrix_quadrature(state: &StateVector, basis: &ContinuousBasis, n: u64) -> Result<FisherMatrix> {
    if state.len() != basis.size() {
        return Err(Error::DimensionMismatch {
            expected: basis.size(),
            found: state.len(),
        });
    }
    let chart = RealStateChart::from_state(state)?;
    let c0 = chart.checked_c0()?;
    let c = chart.free_params();
    let k = c.len();
    let quad = basis.coordinate_quadrature()?;
    let four_n = 4.0 * n as f64;
    let mut entries = DMatrix::zeros(k, k);
    for (q, &w) in quad.line_weights().iter().enumerate() {
        let phi = quad.phi_at(q);
        let d: Vec<f64> = (0..k).map(|i| phi[i + 1] - c[i] / c0 * phi[0]).collect();
        for i in 0..k {
            for j in 0..k {
                entries[(i, j)] += w * d[i] * d[j];
            }
        }
    }
    entries *= four_n;
    Ok(FisherMatrix {
        entries,
        sample_size: n,
    })
}

/// How the covariance coordinates are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Embedding {
    /// `s` real coordinates.
    Real,
    /// `2s` coordinates `(Re c, Im c)`.
    Complex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
    sample_size: u64,
    embedding: Embedding,
}

impl CovarianceMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn sample_size(&self) -> u64 {
        self.sample_size
    }

    pub fn embedding(&self) -> Embedding {
        self.embedding
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// `Σ = (E − ρ)/(4n)`.
///
/// States that are real up to a global phase use the real chart. Otherwise
/// the state is embedded as `v = (Re c, Im c)` and both the normalization
/// direction `v` and the phase direction `(−Im c, Re c)` are projected out.
pub fn covariance(state: &StateVector, n: u64) -> Result<CovarianceMatrix> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let mut c = state.coefficients().to_vec();
    fix_gauge(&mut c);
    let s = c.len();
    let four_n = 4.0 * n as f64;
    let (entries, embedding) = if c.iter().all(|z| z.im.abs() <= REAL_TOLERANCE) {
        let m = DMatrix::from_fn(s, s, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            (delta - c[i].re * c[j].re) / four_n
        });
        (m, Embedding::Real)
    } else {
        let v: Vec<f64> = c.iter().map(|z| z.re).chain(c.iter().map(|z| z.im)).collect();
        let w: Vec<f64> = c.iter().map(|z| -z.im).chain(c.iter().map(|z| z.re)).collect();
        let m = DMatrix::from_fn(2 * s, 2 * s, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            (delta - v[i] * v[j] - w[i] * w[j]) / four_n
        });
        (m, Embedding::Complex)
    };
    Ok(CovarianceMatrix {
        entries,
        sample_size: n,
        embedding,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCone {
    pub axis: StateVector,
    pub half_angle: f64,
    pub alpha: f64,
    pub dof: usize,
    pub n_total: u64,
    /// Set when `χ²_{dof,α} > 4 n_total`; the cone is then the whole sphere.
    pub degenerate: bool,
}

impl ConfidenceCone {
    /// Whether the direction of `state` lies within the cone.
    pub fn contains(&self, state: &StateVector) -> Result<bool> {
        if self.degenerate {
            return Ok(true);
        }
        let f = fidelity(&self.axis, state)?;
        let s = self.half_angle.sin();
        Ok(1.0 - f <= s * s)
    }
}

/// `sin² 𝒢 = χ²_{dof,α} / (4 n_total)`.
pub fn confidence_cone(estimate: &StateVector, n_total: u64, alpha: f64, dof: usize) -> Result<ConfidenceCone> {
    if n_total == 0 {
        return Err(invalid("n_total", "must be positive"));
    }
    let q = chi2_quantile(dof, alpha)?;
    let ratio = q / (4.0 * n_total as f64);
    let degenerate = ratio > 1.0;
    let half_angle = if degenerate {
        core::f64::consts::FRAC_PI_2
    } else {
        ratio.sqrt().asin()
    };
    Ok(ConfidenceCone {
        axis: estimate.clone(),
        half_angle,
        alpha,
        dof,
        n_total,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `(α, p < α)` for each of [`REPORT_LEVELS`].
    pub reject_at: Vec<(f64, bool)>,
    pub note: Option<&'static str>,
}

impl TestReport {
    fn new(statistic: f64, dof: usize, note: Option<&'static str>) -> Result<Self> {
        let p_value = chi2_survival(dof, statistic)?;
        Ok(Self {
            statistic,
            dof,
            p_value,
            reject_at: REPORT_LEVELS.iter().map(|&a| (a, p_value < a)).collect(),
            note,
        })
    }

    pub fn rejected_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// `T = 4 n_total (1 − |(ĉ, c⁽⁰⁾)|²)` against `χ²_dof`.
pub fn state_equality_test(estimate: &StateVector, reference: &StateVector, n_total: u64, dof: usize) -> Result<TestReport> {
    let f = fidelity(estimate, reference)?;
    TestReport::new(4.0 * n_total as f64 * (1.0 - f), dof, None)
}

/// `T = 4 (n₁n₂/(n₁+n₂)) (1 − |(ĉ₁, ĉ₂)|²)` against `χ²_dof`.
///
/// Each estimate scatters with covariance `(E − ρ)/(4nᵢ)`, so their
/// difference has the harmonic sample size.
pub fn homogeneity_test(
    estimate_1: &StateVector,
    n_1: u64,
    estimate_2: &StateVector,
    n_2: u64,
    dof: usize,
) -> Result<TestReport> {
    if n_1 == 0 || n_2 == 0 {
        return Err(invalid("sample sizes", "both must be positive"));
    }
    let f = fidelity(estimate_1, estimate_2)?;
    let (a, b) = (n_1 as f64, n_2 as f64);
    TestReport::new(4.0 * a * b / (a + b) * (1.0 - f), dof, Some(HOMOGENEITY_NOTE))
}
