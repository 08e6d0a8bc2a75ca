//! Synthetic observations drawn from a known state.
//!
//! Continuous samples use inverse-CDF sampling over a uniform grid of
//! [`GRID_POINTS`] nodes with a piecewise-linear CDF (uniform within each
//! cell). Register counts are two independent multinomials, one over `|cᵢ|²`
//! and one over `|(Uc)ⱼ|²`.

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{ContinuousBasis, DiscreteBasis};
use crate::error::invalid;
use crate::state::StateVector;
use crate::{Error, Result};

pub const GRID_POINTS: usize = 1 << 14;
/// The grid must capture at least `1 − MASS_DEFICIT` of the density.
pub const MASS_DEFICIT: f64 = 1e-10;

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Coordinate,
    Momentum,
}

impl Space {
    pub fn as_str(self) -> &'static str {
        match self {
            Space::Coordinate => "coordinate",
            Space::Momentum => "momentum",
        }
    }
}

/// Observations from one space.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    space: Space,
    points: Vec<f64>,
}

impl Sample {
    pub fn new(space: Space, points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoObservations);
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(invalid("sample", alloc::format!("observation {i} is not finite")));
        }
        Ok(Self { space, points })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }
}

/// Coordinate and momentum observations of one ensemble. Either side may be
/// empty, not both.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContinuousObservations {
    pub coordinate: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl ContinuousObservations {
    pub fn new(coordinate: Vec<f64>, momentum: Vec<f64>) -> Result<Self> {
        if coordinate.is_empty() && momentum.is_empty() {
            return Err(Error::NoObservations);
        }
        if coordinate.iter().chain(&momentum).any(|p| !p.is_finite()) {
            return Err(invalid("observations", "non-finite value"));
        }
        Ok(Self {
            coordinate,
            momentum,
        })
    }

    /// Combines up to one sample per space.
    pub fn from_samples<'a, I: IntoIterator<Item = &'a Sample>>(samples: I) -> Result<Self> {
        let mut obs = Self::default();
        for s in samples {
            let slot = match s.space {
                Space::Coordinate => &mut obs.coordinate,
                Space::Momentum => &mut obs.momentum,
            };
            if !slot.is_empty() {
                return Err(invalid("observations", alloc::format!("two {} samples", s.space.as_str())));
            }
            slot.extend_from_slice(&s.points);
        }
        Self::new(obs.coordinate, obs.momentum)
    }

    pub fn n(&self) -> usize {
        self.coordinate.len()
    }

    pub fn m(&self) -> usize {
        self.momentum.len()
    }

    pub fn total(&self) -> usize {
        self.n() + self.m()
    }
}

/// Counts of register outcomes in the direct and conjugate experiments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterCounts {
    direct: Vec<u64>,
    conjugate: Vec<u64>,
}

impl RegisterCounts {
    pub fn new(direct: Vec<u64>, conjugate: Vec<u64>) -> Result<Self> {
        if direct.is_empty() || direct.len() != conjugate.len() {
            return Err(invalid(
                "register counts",
                alloc::format!("direct length {} and conjugate length {} must match and be positive", direct.len(), conjugate.len()),
            ));
        }
        Ok(Self { direct, conjugate })
    }

    pub fn dimension(&self) -> usize {
        self.direct.len()
    }

    pub fn direct(&self) -> &[u64] {
        &self.direct
    }

    pub fn conjugate(&self) -> &[u64] {
        &self.conjugate
    }

    /// `n = Σ nᵢ`.
    pub fn n(&self) -> u64 {
        self.direct.iter().sum()
    }

    /// `m = Σ mⱼ`.
    pub fn m(&self) -> u64 {
        self.conjugate.iter().sum()
    }
}

/// Inverse-CDF sampler on a uniform grid.
#[derive(Debug, Clone)]
pub struct GridSampler {
    start: f64,
    step: f64,
    cdf: Vec<f64>,
    mass: f64,
}

impl GridSampler {
    /// Tabulates `density` on [`GRID_POINTS`] nodes of `[−half_width, half_width]`.
    /// Fails when the trapezoid mass falls short of `1 − MASS_DEFICIT`.
    pub fn new<F: FnMut(f64) -> f64>(mut density: F, half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(invalid("grid half-width", "must be positive and finite"));
        }
        let start = -half_width;
        let step = 2.0 * half_width / (GRID_POINTS - 1) as f64;
        let values: Vec<f64> = (0..GRID_POINTS)
            .map(|i| density(start + i as f64 * step).max(0.0))
            .collect();
        let mut cdf = Vec::with_capacity(GRID_POINTS);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf.push(acc);
        }
        let mass = acc;
        if mass.is_nan() || mass < 1.0 - MASS_DEFICIT {
            return Err(invalid(
                "sampling grid",
                alloc::format!("captures mass {mass}, below 1 - {MASS_DEFICIT:e}"),
            ));
        }
        cdf.iter_mut().for_each(|v| *v /= mass);
        Ok(Self {
            start,
            step,
            cdf,
            mass,
        })
    }

    /// Trapezoid mass of the tabulated density before normalization.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn support(&self) -> (f64, f64) {
        (self.start, self.start + self.step * (GRID_POINTS - 1) as f64)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        // First node whose CDF exceeds u; the cell is the one before it.
        let upper = self.cdf.partition_point(|&c| c <= u).clamp(1, GRID_POINTS - 1);
        let lo = self.cdf[upper - 1];
        let hi = self.cdf[upper];
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        self.start + self.step * ((upper - 1) as f64 + frac)
    }
}

/// Half-width of the sampling window for a basis of `size` functions at
/// scale `scale`.
pub fn grid_half_width(size: usize, scale: f64) -> f64 {
    scale * ((2.0 * (2 * size + 1) as f64).sqrt() + 6.0)
}

pub fn coordinate_sampler(state: &StateVector, basis: &ContinuousBasis) -> Result<GridSampler> {
    state.amplitude_at(basis, 0.0)?;
    GridSampler::new(
        |x| state.density_at(basis, x).unwrap_or(0.0),
        grid_half_width(basis.size(), basis.scale()),
    )
}

pub fn momentum_sampler(state: &StateVector, basis: &ContinuousBasis) -> Result<GridSampler> {
    state.amplitude_at(basis, 0.0)?;
    GridSampler::new(
        |p| state.momentum_density_at(basis, p).unwrap_or(0.0),
        grid_half_width(basis.size(), 1.0 / basis.scale()),
    )
}

fn draw_n<R: Rng + ?Sized>(sampler: &GridSampler, count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| sampler.draw(rng)).collect()
}

/// `n` coordinate observations from `P(x)`.
pub fn sample_coordinate_with<R: Rng + ?Sized>(
    state: &StateVector,
    basis: &ContinuousBasis,
    n: usize,
    rng: &mut R,
) -> Result<Sample> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let sampler = coordinate_sampler(state, basis)?;
    Sample::new(Space::Coordinate, draw_n(&sampler, n, rng))
}

/// `m` momentum observations from `P̃(p)`.
pub fn sample_momentum_with<R: Rng + ?Sized>(
    state: &StateVector,
    basis: &ContinuousBasis,
    m: usize,
    rng: &mut R,
) -> Result<Sample> {
    if m == 0 {
        return Err(invalid("m", "must be at least 1"));
    }
    let sampler = momentum_sampler(state, basis)?;
    Sample::new(Space::Momentum, draw_n(&sampler, m, rng))
}

pub fn sample_coordinate(state: &StateVector, basis: &ContinuousBasis, n: usize, seed: u64) -> Result<Sample> {
    sample_coordinate_with(state, basis, n, &mut rng_from_seed(seed))
}

pub fn sample_momentum(state: &StateVector, basis: &ContinuousBasis, m: usize, seed: u64) -> Result<Sample> {
    sample_momentum_with(state, basis, m, &mut rng_from_seed(seed))
}

/// Both complementing experiments from one generator; either count may be
/// zero.
pub fn sample_continuous_with<R: Rng + ?Sized>(
    state: &StateVector,
    basis: &ContinuousBasis,
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<ContinuousObservations> {
    let coordinate = if n > 0 {
        sample_coordinate_with(state, basis, n, rng)?.into_points()
    } else {
        Vec::new()
    };
    let momentum = if m > 0 {
        sample_momentum_with(state, basis, m, rng)?.into_points()
    } else {
        Vec::new()
    };
    ContinuousObservations::new(coordinate, momentum)
}

fn multinomial<R: Rng + ?Sized>(probabilities: &[f64], count: u64, rng: &mut R) -> Result<Vec<u64>> {
    let mut counts = alloc::vec![0u64; probabilities.len()];
    if count == 0 {
        return Ok(counts);
    }
    let dist = WeightedIndex::new(probabilities)
        .map_err(|_| invalid("probabilities", "not a valid weight vector"))?;
    for _ in 0..count {
        counts[dist.sample(rng)] += 1;
    }
    Ok(counts)
}

pub fn sample_register_with<R: Rng + ?Sized>(
    state: &StateVector,
    basis: &DiscreteBasis,
    n: u64,
    m: u64,
    rng: &mut R,
) -> Result<RegisterCounts> {
    if n == 0 && m == 0 {
        return Err(invalid("n + m", "must be at least 1"));
    }
    let conj = state.conjugate_amplitudes(basis)?;
    let direct_p: Vec<f64> = state.coefficients().iter().map(|c| c.norm_sqr()).collect();
    let conj_p: Vec<f64> = conj.iter().map(|c| c.norm_sqr()).collect();
    let direct = multinomial(&direct_p, n, rng)?;
    let conjugate = multinomial(&conj_p, m, rng)?;
    RegisterCounts::new(direct, conjugate)
}

pub fn sample_register(state: &StateVector, basis: &DiscreteBasis, n: u64, m: u64, seed: u64) -> Result<RegisterCounts> {
    sample_register_with(state, basis, n, m, &mut rng_from_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::dft_unitary;
    use crate::state::BasisTag;

    const HERMITE: BasisTag = BasisTag::Hermite { scale: 1.0 };

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn ground_state_sample_means() {
        let b = ContinuousBasis::new(4).unwrap();
        let s = StateVector::basis_state(4, 0, HERMITE).unwrap();
        let n = 100_000;
        let bound = 4.0 * (0.5f64 / n as f64).sqrt();
        let x = sample_coordinate(&s, &b, n, 1).unwrap();
        let p = sample_momentum(&s, &b, n, 2).unwrap();
        assert!(mean(x.points()).abs() < bound);
        assert!(mean(p.points()).abs() < bound);
        assert_eq!(x.space(), Space::Coordinate);
        assert_eq!(p.space(), Space::Momentum);
    }

    #[test]
    fn fixed_seed_reproduces() {
        let b = ContinuousBasis::new(3).unwrap();
        let s = StateVector::from_real(&[0.6, 0.0, 0.8], HERMITE).unwrap();
        assert_eq!(sample_coordinate(&s, &b, 500, 9).unwrap(), sample_coordinate(&s, &b, 500, 9).unwrap());
        assert_eq!(sample_momentum(&s, &b, 500, 9).unwrap(), sample_momentum(&s, &b, 500, 9).unwrap());
        assert_ne!(sample_coordinate(&s, &b, 500, 9).unwrap(), sample_coordinate(&s, &b, 500, 10).unwrap());
    }

    #[test]
    fn grid_captures_mass_and_is_monotone() {
        let b = ContinuousBasis::with_scale(6, 0.7).unwrap();
        let s = StateVector::from_real(&[0.2, -0.5, 0.1, 0.6, 0.3, 0.5], BasisTag::of_continuous(&b)).unwrap();
        for sampler in [coordinate_sampler(&s, &b).unwrap(), momentum_sampler(&s, &b).unwrap()] {
            assert!(sampler.mass() >= 1.0 - MASS_DEFICIT);
            assert!(sampler.cdf().windows(2).all(|w| w[0] <= w[1]));
            let (lo, hi) = sampler.support();
            let mut rng = rng_from_seed(5);
            for _ in 0..2000 {
                let v = sampler.draw(&mut rng);
                assert!(v >= lo && v <= hi);
            }
        }
    }

    #[test]
    fn truncated_grid_is_rejected() {
        let err = GridSampler::new(|x| (-x * x).exp() / core::f64::consts::PI.sqrt(), 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn zero_counts_rejected() {
        let b = ContinuousBasis::new(2).unwrap();
        let s = StateVector::basis_state(2, 0, HERMITE).unwrap();
        assert!(sample_coordinate(&s, &b, 0, 1).is_err());
        let d = dft_unitary(2).unwrap();
        let r = StateVector::basis_state(2, 0, BasisTag::of_discrete(&d)).unwrap();
        assert!(sample_register(&r, &d, 0, 0, 1).is_err());
    }

    #[test]
    fn degenerate_register_multinomial() {
        let d = dft_unitary(8).unwrap();
        let s = StateVector::basis_state(8, 0, BasisTag::of_discrete(&d)).unwrap();
        let counts = sample_register(&s, &d, 123, 0, 4).unwrap();
        assert_eq!(counts.direct()[0], 123);
        assert_eq!(counts.n(), 123);
        assert_eq!(counts.m(), 0);
        assert!(counts.conjugate().iter().all(|&c| c == 0));
    }

    #[test]
    fn conjugate_counts_of_two_level_dft() {
        let d = dft_unitary(2).unwrap();
        let s = StateVector::basis_state(2, 0, BasisTag::of_discrete(&d)).unwrap();
        let counts = sample_register(&s, &d, 0, 10_000, 8).unwrap();
        for &c in counts.conjugate() {
            assert!((c as i64 - 5000).abs() <= 200, "{c}");
        }
    }
}
