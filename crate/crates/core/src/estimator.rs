//! Maximum-likelihood state estimation from complementing experiments.
//!
//! Every observation `k` contributes a row `aₖ` (the basis evaluated at the
//! observed point, or a register row) and a weight `wₖ` (1 for a continuous
//! point, the count for a register outcome). With `ψₖ = Σⱼ aₖⱼ cⱼ` and
//! `Pₖ = |ψₖ|²`:
//!
//! ```text
//! ln L      = Σₖ wₖ ln Pₖ
//! R_ij      = Σₖ wₖ aₖᵢ* aₖⱼ / Pₖ
//! (R c)ᵢ    = Σₖ wₖ aₖᵢ* / ψₖ*
//! ```
//!
//! The likelihood equation is `R(c) c = λ c`, and contracting with `c†` gives
//! `λ = Σₖ wₖ = n + m`. The solver iterates
//! `c ← normalize((1 − τ) c + τ R(c) c / (n + m))`. The step `R c/(n+m) − c`
//! is tangent to the unit sphere and proportional to the likelihood gradient,
//! so halving `τ` always recovers an ascent step.

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng;

use crate::basis::{hermite_functions, minus_i_pow, ContinuousBasis, DiscreteBasis};
use crate::error::invalid;
use crate::sampling::{grid_half_width, rng_from_seed, ContinuousObservations, RegisterCounts};
use crate::state::{fix_gauge, BasisTag, StateVector};
use crate::{Complex64, Error, Result};

/// Relative slack allowed when comparing successive log-likelihoods.
pub const MONOTONICITY_SLACK: f64 = 1e-12;
/// Consecutive accepted steps before the damping returns to its configured
/// value.
const DAMPING_RESET_AFTER: u32 = 5;
const MIN_DAMPING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub max_iterations: usize,
    /// Relative change of `ln L` between accepted steps.
    pub tolerance_loglik: f64,
    /// `‖R ĉ − (n+m) ĉ‖∞ / (n+m)`.
    pub tolerance_residual: f64,
    /// Step fraction `τ ∈ (0, 1]`.
    pub damping: f64,
    /// Densities below `density_floor · max P` are clipped. Zero disables the
    /// floor.
    pub density_floor: f64,
    /// Half-width (radians) of the uniform phase perturbation applied to the
    /// starting point when both experiments are present.
    pub init_phase_jitter: f64,
    /// Extra random starting points; the highest likelihood wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance_loglik: 1e-10,
            tolerance_residual: 1e-8,
            damping: 0.5,
            density_floor: 1e-12,
            init_phase_jitter: 0.05,
            restarts: 4,
            seed: 0,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive"));
        }
        for (name, v) in [
            ("tolerance_loglik", self.tolerance_loglik),
            ("tolerance_residual", self.tolerance_residual),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", "must lie in (0, 1]"));
        }
        if !(self.density_floor >= 0.0 && self.density_floor < 1.0) {
            return Err(invalid("density_floor", "must lie in [0, 1)"));
        }
        if !(self.init_phase_jitter >= 0.0 && self.init_phase_jitter.is_finite()) {
            return Err(invalid("init_phase_jitter", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub estimate: StateVector,
    /// Rayleigh quotient `ĉ† R ĉ`, the Lagrange multiplier.
    pub lambda: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub residual: f64,
    pub floor_hits: u64,
    pub converged: bool,
    /// Set when only one experiment was observed, so relative phases are not
    /// determined by the data.
    pub phases_unidentified: bool,
    /// Observations in the direct (coordinate) experiment.
    pub n: u64,
    /// Observations in the conjugate (momentum) experiment.
    pub m: u64,
    /// `ln L` after each accepted step, starting point first.
    pub loglik_trace: Vec<f64>,
}

impl EstimationResult {
    pub fn total(&self) -> u64 {
        self.n + self.m
    }
}

/// The data-dependent Hermitian matrix of the likelihood equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RMatrix {
    entries: DMatrix<Complex64>,
}

impl RMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = &self.entries - self.entries.adjoint();
        d.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// `c† R c`.
    pub fn quadratic_form(&self, c: &[Complex64]) -> Complex64 {
        let s = c.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..s {
            for j in 0..s {
                acc += c[i].conj() * self.entries[(i, j)] * c[j];
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Direct,
    Conjugate,
}

#[derive(Debug, Clone)]
enum Row {
    /// `aₖ = e_index`.
    Unit(usize),
    /// Offset into the dense row storage.
    Dense(usize),
}

/// Likelihood of one dataset as a function of the state vector.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    size: usize,
    rows: Vec<Row>,
    sides: Vec<Side>,
    weights: Vec<f64>,
    dense: Vec<Complex64>,
    n: u64,
    m: u64,
    tag: BasisTag,
    starts: Vec<Vec<Complex64>>,
    chart: Option<RealChart>,
}

struct Evaluation {
    psi: Vec<Complex64>,
    density: Vec<f64>,
    loglik: f64,
    floor_hits: u64,
}

impl LikelihoodModel {
    /// Coordinate points contribute `φⱼ(xₖ)`, momentum points `φ̃ⱼ(pₗ)`.
    pub fn continuous(basis: &ContinuousBasis, obs: &ContinuousObservations) -> Result<Self> {
        if obs.total() == 0 {
            return Err(Error::NoObservations);
        }
        let s = basis.size();
        let mut model = Self::empty(s, obs.n() as u64, obs.m() as u64, BasisTag::of_continuous(basis));
        for &x in &obs.coordinate {
            let row = basis.phi_row(x).into_iter().map(|v| Complex64::new(v, 0.0));
            model.push_dense(row, 1.0, Side::Direct);
        }
        for &p in &obs.momentum {
            model.push_dense(basis.phi_tilde_row(p), 1.0, Side::Conjugate);
        }
        model.starts = sign_pattern_starts(basis, obs);
        if obs.n() == 0 || obs.m() == 0 {
            model.chart = Some(RealChart::new(basis, obs));
        }
        Ok(model)
    }

    /// Direct outcome `i` contributes the unit row `eᵢ` with weight `nᵢ`;
    /// conjugate outcome `j` contributes row `j` of `U` with weight `mⱼ`.
    pub fn register(basis: &DiscreteBasis, counts: &RegisterCounts) -> Result<Self> {
        let s = basis.dimension();
        if counts.dimension() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: counts.dimension(),
            });
        }
        let (n, m) = (counts.n(), counts.m());
        if n + m == 0 {
            return Err(Error::NoObservations);
        }
        let mut model = Self::empty(s, n, m, BasisTag::of_discrete(basis));
        for (i, &c) in counts.direct().iter().enumerate() {
            if c > 0 {
                model.rows.push(Row::Unit(i));
                model.sides.push(Side::Direct);
                model.weights.push(c as f64);
            }
        }
        for (j, &c) in counts.conjugate().iter().enumerate() {
            if c > 0 {
                model.push_dense(basis.row(j), c as f64, Side::Conjugate);
            }
        }
        let start = if n > 0 {
            counts
                .direct()
                .iter()
                .map(|&c| Complex64::new((c as f64 / n as f64).sqrt(), 0.0))
                .collect()
        } else {
            // Amplitudes that reproduce the conjugate frequencies exactly.
            let target: Vec<Complex64> = counts
                .conjugate()
                .iter()
                .map(|&c| Complex64::new((c as f64 / m as f64).sqrt(), 0.0))
                .collect();
            let u = basis.unitary();
            (0..s)
                .map(|i| (0..s).map(|j| u[(j, i)].conj() * target[j]).sum())
                .collect()
        };
        model.starts = alloc::vec![start];
        Ok(model)
    }

    fn empty(size: usize, n: u64, m: u64, tag: BasisTag) -> Self {
        Self {
            size,
            rows: Vec::new(),
            sides: Vec::new(),
            weights: Vec::new(),
            dense: Vec::new(),
            n,
            m,
            tag,
            starts: Vec::new(),
            chart: None,
        }
    }

    fn push_dense<I: IntoIterator<Item = Complex64>>(&mut self, row: I, weight: f64, side: Side) {
        let offset = self.dense.len();
        self.dense.extend(row);
        debug_assert_eq!(self.dense.len() - offset, self.size);
        self.rows.push(Row::Dense(offset));
        self.sides.push(side);
        self.weights.push(weight);
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    /// `n + m`.
    pub fn total(&self) -> f64 {
        (self.n + self.m) as f64
    }

    /// Whether both complementing experiments contributed data.
    pub fn is_complementary(&self) -> bool {
        self.n > 0 && self.m > 0
    }

    fn amplitude(&self, row: &Row, c: &[Complex64]) -> Complex64 {
        match *row {
            Row::Unit(i) => c[i],
            Row::Dense(off) => self.dense[off..off + self.size]
                .iter()
                .zip(c)
                .map(|(a, x)| a * x)
                .sum(),
        }
    }

    fn evaluate(&self, c: &[Complex64], floor: f64) -> Result<Evaluation> {
        let psi: Vec<Complex64> = self.rows.iter().map(|r| self.amplitude(r, c)).collect();
        let mut density: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let max = density.iter().fold(0.0f64, |a, &b| a.max(b));
        let threshold = floor * max;
        let mut floor_hits = 0;
        let mut loglik = 0.0;
        for (k, p) in density.iter_mut().enumerate() {
            if *p < threshold {
                *p = threshold;
                floor_hits += self.weights[k] as u64;
            }
            if *p <= 0.0 {
                let side = self.sides[k];
                return Err(Error::ZeroDensity {
                    space: match side {
                        Side::Direct => "direct",
                        Side::Conjugate => "conjugate",
                    },
                    index: self.sides[..k].iter().filter(|&&s| s == side).count(),
                });
            }
            loglik += self.weights[k] * p.ln();
        }
        Ok(Evaluation {
            psi,
            density,
            loglik,
            floor_hits,
        })
    }

    /// `R(c) c`.
    fn r_times(&self, eval: &Evaluation) -> Vec<Complex64> {
        let mut out = alloc::vec![Complex64::new(0.0, 0.0); self.size];
        for (k, row) in self.rows.iter().enumerate() {
            let coef = eval.psi[k] * (self.weights[k] / eval.density[k]);
            match *row {
                Row::Unit(i) => out[i] += coef,
                Row::Dense(off) => {
                    for (o, a) in out.iter_mut().zip(&self.dense[off..off + self.size]) {
                        *o += a.conj() * coef;
                    }
                }
            }
        }
        out
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.len() != self.size {
            return Err(Error::DimensionMismatch {
                expected: self.size,
                found: state.len(),
            });
        }
        Ok(())
    }

    /// `ln L(c)` with densities floored at `density_floor · max P`.
    pub fn log_likelihood(&self, state: &StateVector, density_floor: f64) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.evaluate(state.coefficients(), density_floor)?.loglik)
    }

    /// The full `s × s` R matrix at `state`.
    pub fn r_matrix(&self, state: &StateVector, density_floor: f64) -> Result<RMatrix> {
        self.check_state(state)?;
        let eval = self.evaluate(state.coefficients(), density_floor)?;
        let s = self.size;
        let mut entries = DMatrix::from_element(s, s, Complex64::new(0.0, 0.0));
        for (k, row) in self.rows.iter().enumerate() {
            let w = self.weights[k] / eval.density[k];
            match *row {
                Row::Unit(i) => entries[(i, i)] += w,
                Row::Dense(off) => {
                    let a = &self.dense[off..off + s];
                    for i in 0..s {
                        let ai = a[i].conj() * w;
                        for j in 0..s {
                            entries[(i, j)] += ai * a[j];
                        }
                    }
                }
            }
        }
        Ok(RMatrix { entries })
    }

    fn jittered<R: Rng + ?Sized>(&self, mut c: Vec<Complex64>, jitter: f64, rng: &mut R) -> Vec<Complex64> {
        if self.is_complementary() && jitter > 0.0 {
            for z in c.iter_mut() {
                let theta = rng.random_range(-jitter..=jitter);
                *z *= Complex64::from_polar(1.0, theta);
            }
        }
        c
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let tag = self.tag;
        if self.is_complementary() {
            return StateVector::random(self.size, tag, rng)
                .map(|s| s.coefficients().to_vec())
                .unwrap_or_else(|_| self.starts[0].clone());
        }
        // One-sided data: stay in the phase pattern of the deterministic start.
        let reference = &self.starts[0];
        StateVector::random_real(self.size, tag, rng)
            .map(|s| {
                s.coefficients()
                    .iter()
                    .zip(reference)
                    .map(|(x, y)| if y.norm() > 0.0 { x * (y / y.norm()) } else { *x })
                    .collect()
            })
            .unwrap_or_else(|_| reference.clone())
    }

    /// Damped fixed-point iteration from `start`.
    fn iterate(&self, start: Vec<Complex64>, config: &EstimationConfig) -> Result<EstimationResult> {
        let total = self.total();
        let mut c = normalize(start)?;
        let mut eval = self.evaluate(&c, config.density_floor)?;
        let mut trace = alloc::vec![eval.loglik];
        let mut tau = config.damping;
        let mut successes = 0;
        let mut last_change = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        let (mut rc, mut residual) = self.step_direction(&c, &eval);

        loop {
            if residual < config.tolerance_residual && last_change < config.tolerance_loglik {
                converged = true;
                break;
            }
            if iterations >= config.max_iterations {
                break;
            }
            iterations += 1;
            let mut accepted = false;
            while tau >= MIN_DAMPING {
                let candidate: Vec<Complex64> = c
                    .iter()
                    .zip(&rc)
                    .map(|(x, r)| x * (1.0 - tau) + r * (tau / total))
                    .collect();
                let candidate = normalize(candidate)?;
                let next = self.evaluate(&candidate, config.density_floor)?;
                let slack = MONOTONICITY_SLACK * eval.loglik.abs().max(1.0);
                if next.loglik >= eval.loglik - slack {
                    last_change = (next.loglik - eval.loglik).abs() / eval.loglik.abs().max(1.0);
                    c = candidate;
                    eval = next;
                    trace.push(eval.loglik);
                    accepted = true;
                    successes += 1;
                    if successes >= DAMPING_RESET_AFTER {
                        tau = config.damping;
                        successes = 0;
                    }
                    break;
                }
                tau *= 0.5;
                successes = 0;
            }
            if !accepted {
                break;
            }
            (rc, residual) = self.step_direction(&c, &eval);
        }

        let lambda = c.iter().zip(&rc).map(|(x, r)| x.conj() * r).sum::<Complex64>().re;
        fix_gauge(&mut c);
        let estimate = StateVector::normalized(c, self.tag)?;
        Ok(EstimationResult {
            estimate,
            lambda,
            log_likelihood: eval.loglik,
            iterations,
            residual,
            floor_hits: eval.floor_hits,
            converged,
            phases_unidentified: !self.is_complementary(),
            n: self.n,
            m: self.m,
            loglik_trace: trace,
        })
    }

    fn step_direction(&self, c: &[Complex64], eval: &Evaluation) -> (Vec<Complex64>, f64) {
        let total = self.total();
        let rc = self.r_times(eval);
        let residual = rc
            .iter()
            .zip(c)
            .fold(0.0f64, |acc, (r, x)| acc.max((r - x * total).norm()))
            / total;
        (rc, residual)
    }

    /// Runs the solver from a caller-supplied starting state.
    pub fn solve_from(&self, start: &StateVector, config: &EstimationConfig) -> Result<EstimationResult> {
        config.validate()?;
        self.check_state(start)?;
        self.iterate(start.coefficients().to_vec(), config)
    }

    /// Runs the solver from the data-driven starts and any configured restarts.
    ///
    /// Every start gets a short iteration budget; only the leader is then
    /// iterated to convergence.
    pub fn solve(&self, config: &EstimationConfig) -> Result<EstimationResult> {
        config.validate()?;
        let mut rng = rng_from_seed(config.seed);
        let mut starts: Vec<Vec<Complex64>> = self
            .starts
            .iter()
            .map(|c| self.jittered(c.clone(), config.init_phase_jitter, &mut rng))
            .collect();
        // Direct register counts fix only the moduli, which the start already
        // maximizes.
        let restarts = if self.dense.is_empty() { 0 } else { config.restarts };
        for _ in 0..restarts {
            starts.push(self.random_point(&mut rng));
        }
        if starts.len() == 1 {
            return self.iterate(starts.pop().ok_or(Error::NoObservations)?, config);
        }
        let scout = EstimationConfig {
            max_iterations: config.max_iterations.min(EXPLORATION_BUDGET),
            ..config.clone()
        };
        let mut scouts = Vec::with_capacity(starts.len());
        for start in starts {
            scouts.push(self.iterate(start, &scout)?);
        }
        if let Some(chart) = &self.chart {
            let mut frontier = scouts.clone();
            frontier.sort_by(|a, b| b.log_likelihood.total_cmp(&a.log_likelihood));
            frontier.dedup_by(|a, b| (a.log_likelihood - b.log_likelihood).abs() <= 1e-9 * b.log_likelihood.abs());
            frontier.truncate(MAX_HOP_FRONTIER);
            for _ in 0..MAX_HOP_ROUNDS {
                let mut next = Vec::new();
                for from in &frontier {
                    for hop in chart.hops(from.estimate.coefficients()) {
                        let candidate = self.iterate(hop, &scout)?;
                        let slack = MONOTONICITY_SLACK * from.log_likelihood.abs().max(1.0);
                        if candidate.log_likelihood > from.log_likelihood + slack {
                            next.push(candidate);
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                next.sort_by(|a, b| b.log_likelihood.total_cmp(&a.log_likelihood));
                next.truncate(MAX_HOP_FRONTIER);
                scouts.extend(next.iter().cloned());
                frontier = next;
            }
        }
        // Earlier starts win ties, so the deterministic ones are preferred.
        let best = scouts.into_iter().reduce(|a, b| {
            let slack = MONOTONICITY_SLACK * a.log_likelihood.abs().max(1.0);
            if b.log_likelihood > a.log_likelihood + slack {
                b
            } else {
                a
            }
        });
        let best = best.ok_or(Error::NoObservations)?;
        if best.converged {
            return Ok(best);
        }
        let spent = best.iterations;
        let mut rest = config.clone();
        rest.max_iterations = config.max_iterations - spent;
        let mut finished = self.iterate(best.estimate.coefficients().to_vec(), &rest)?;
        finished.iterations += spent;
        let mut trace = best.loglik_trace;
        trace.extend(finished.loglik_trace.into_iter().skip(1));
        finished.loglik_trace = trace;
        Ok(finished)
    }
}

fn normalize(mut c: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Numerical("iterate lost its norm"));
    }
    c.iter_mut().for_each(|z| *z /= norm);
    Ok(c)
}

/// Iteration budget for each start before the leader is refined.
const EXPLORATION_BUDGET: usize = 200;
const MAX_HOPS_PER_STATE: usize = 3;
const MAX_HOP_ROUNDS: usize = 3;
const MAX_HOP_FRONTIER: usize = 8;
/// Coarse zero positions per scan, evenly spread over the sample range.
const SCAN_GRID: usize = 96;
/// Fine positions tried around the best coarse one.
const SCAN_REFINE: usize = 64;
/// Imaginary parts tried for a complex pair of zeros, in reduced units.
const PAIR_WIDTHS: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];
/// Smallest predicted gain in `ln L` for a relocation to be tried.
const MIN_HOP_GAIN: f64 = 0.5;
/// Eigenvalues with a smaller imaginary part count as real zeros.
const REAL_ROOT_TOLERANCE: f64 = 1e-7;

/// Real coefficients of a one-sided continuous fit, in the representation
/// of the observed side, together with its sorted reduced sample points.
///
/// With real coefficients `ψ` is `e^{−t²/2}` times a real polynomial, and a
/// real zero cannot cross a sample point without the likelihood passing
/// through `−∞`. The fixed point therefore stalls with zeros in the wrong
/// gaps between points, or with a complex pair where the data want two real
/// zeros. [`RealChart::hops`] scores relocations of zeros and returns the
/// most promising ones as new starting points.
#[derive(Debug, Clone)]
struct RealChart {
    points: Vec<f64>,
    /// Midpoints between consecutive distinct sample points.
    gaps: Vec<f64>,
    /// Indices into `gaps` evenly spread over the sample range.
    coarse: Vec<usize>,
    momentum: bool,
}

#[derive(Debug, Clone)]
struct Relocation {
    base: Vec<Complex64>,
    add: Vec<Complex64>,
    gain: f64,
}

impl RealChart {
    fn new(basis: &ContinuousBasis, obs: &ContinuousObservations) -> Self {
        let momentum = obs.n() == 0;
        let (raw, scale) = if momentum {
            (&obs.momentum, 1.0 / basis.scale())
        } else {
            (&obs.coordinate, basis.scale())
        };
        let mut points: Vec<f64> = raw.iter().map(|x| x / scale).collect();
        points.sort_by(f64::total_cmp);
        let gaps: Vec<f64> = points
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect();
        let (lo, hi) = (gaps.first().copied().unwrap_or(0.0), gaps.last().copied().unwrap_or(0.0));
        let mut coarse: Vec<usize> = (0..SCAN_GRID)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / SCAN_GRID as f64)
            .map(|t| gaps.partition_point(|&g| g < t).min(gaps.len().saturating_sub(1)))
            .filter(|&g| g < gaps.len())
            .collect();
        coarse.dedup();
        Self {
            points,
            gaps,
            coarse,
            momentum,
        }
    }

    fn to_real(&self, c: &[Complex64]) -> Vec<f64> {
        let side: Vec<Complex64> = c
            .iter()
            .enumerate()
            .map(|(j, z)| if self.momentum { z * minus_i_pow(j) } else { *z })
            .collect();
        let lead = side.iter().fold(Complex64::new(0.0, 0.0), |a, &z| if z.norm() > a.norm() { z } else { a });
        let phase = if lead.norm() > 0.0 { lead.conj() / lead.norm() } else { Complex64::new(1.0, 0.0) };
        side.iter().map(|z| (z * phase).re).collect()
    }

    fn lift(&self, r: &[f64]) -> Vec<Complex64> {
        r.iter()
            .enumerate()
            .map(|(j, &v)| if self.momentum { minus_i_pow(j).conj() * v } else { Complex64::new(v, 0.0) })
            .collect()
    }

    /// `Σₖ ln |tₖ − z|²` over the sample.
    fn log_distance(&self, z: Complex64) -> f64 {
        let b2 = z.im * z.im;
        self.points.iter().map(|&t| ((t - z.re) * (t - z.re) + b2).ln()).sum()
    }

    /// Predicted `Δ ln L` for replacing the removed zeros by `add`, given
    /// the quotient `base` and the removed zeros' summed log distance.
    fn gain(&self, base: &[Complex64], removed: f64, add: &[Complex64], added: f64) -> f64 {
        let c = add.iter().fold(base.to_vec(), |q, &z| multiply_root(&q, z));
        let norm_sqr: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        added - removed - self.points.len() as f64 * norm_sqr.ln()
    }

    /// Best fine position for one new real zero near coarse position `i`,
    /// next to the fixed zeros `others`.
    fn refine(&self, base: &[Complex64], removed: f64, others: &[Complex64], others_log: f64, i: usize, start: (f64, f64)) -> (f64, f64) {
        let mut add = others.to_vec();
        add.push(Complex64::new(0.0, 0.0));
        let last = add.len() - 1;
        let lo = if i == 0 { 0 } else { self.coarse[i - 1] };
        let hi = self.coarse.get(i + 1).copied().unwrap_or(self.gaps.len() - 1);
        let step = ((hi - lo) / SCAN_REFINE).max(1);
        let mut place = start;
        for g in (lo..=hi).step_by(step) {
            let u = self.gaps[g];
            add[last] = Complex64::new(u, 0.0);
            let v = self.gain(base, removed, &add, others_log + self.log_distance(add[last]));
            if v > place.0 {
                place = (v, u);
            }
        }
        place
    }

    /// Best position of one new real zero.
    fn place_real(&self, base: &[Complex64], removed: f64, coarse: &[f64]) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, &g) in self.coarse.iter().enumerate() {
            let v = self.gain(base, removed, &[Complex64::new(self.gaps[g], 0.0)], coarse[i]);
            if v > best.0 {
                best = (v, i);
            }
        }
        let i = best.1;
        self.refine(base, removed, &[], 0.0, i, (best.0, self.gaps[self.coarse[i]]))
    }

    /// Best positions of two new real zeros: a joint coarse scan, then each
    /// zero refined with the other held fixed.
    fn place_real_pair(&self, base: &[Complex64], removed: f64, coarse: &[f64]) -> Relocation {
        let at = |i: usize| Complex64::new(self.gaps[self.coarse[i]], 0.0);
        let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
        for i in 0..self.coarse.len() {
            for j in i + 1..self.coarse.len() {
                let v = self.gain(base, removed, &[at(i), at(j)], coarse[i] + coarse[j]);
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        let (gain, i, j) = best;
        if j == 0 {
            return Relocation {
                base: base.to_vec(),
                add: Vec::new(),
                gain,
            };
        }
        let v0 = at(j);
        let (_, u) = self.refine(base, removed, &[v0], coarse[j], i, (gain, at(i).re));
        let u0 = Complex64::new(u, 0.0);
        let (gain, v) = self.refine(base, removed, &[u0], self.log_distance(u0), j, (f64::NEG_INFINITY, v0.re));
        Relocation {
            base: base.to_vec(),
            add: alloc::vec![u0, Complex64::new(v, 0.0)],
            gain,
        }
    }

    /// Starting points with zeros relocated where the likelihood predicts
    /// the largest gains.
    fn hops(&self, c: &[Complex64]) -> Vec<Vec<Complex64>> {
        let s = c.len();
        if s < 2 || self.coarse.is_empty() {
            return Vec::new();
        }
        let mut r = self.to_real(c);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm.is_nan() || norm <= 0.0 {
            return Vec::new();
        }
        r.iter_mut().for_each(|v| *v /= norm);
        let poly: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let roots = hermite_roots(&r);
        let real: Vec<f64> = roots
            .iter()
            .filter(|z| z.im.abs() <= REAL_ROOT_TOLERANCE * z.re.abs().max(1.0))
            .map(|z| z.re)
            .collect();
        let complex: Vec<Complex64> = roots
            .iter()
            .filter(|z| z.im > REAL_ROOT_TOLERANCE * z.re.abs().max(1.0))
            .copied()
            .collect();
        if real.len() + 2 * complex.len() != roots.len() {
            return Vec::new();
        }

        let coarse: Vec<f64> = self
            .coarse
            .iter()
            .map(|&g| self.log_distance(Complex64::new(self.gaps[g], 0.0)))
            .collect();
        let pairs: Vec<(Complex64, f64)> = self
            .coarse
            .iter()
            .flat_map(|&g| PAIR_WIDTHS.iter().map(move |&b| Complex64::new(self.gaps[g], b)))
            .map(|z| (z, 2.0 * self.log_distance(z)))
            .collect();
        let best_pair = |base: &[Complex64], removed: f64| -> Relocation {
            let mut best = Relocation {
                base: base.to_vec(),
                add: Vec::new(),
                gain: f64::NEG_INFINITY,
            };
            for &(z, l) in &pairs {
                let add = [z, z.conj()];
                let v = self.gain(base, removed, &add, l);
                if v > best.gain {
                    best.gain = v;
                    best.add = add.to_vec();
                }
            }
            best
        };

        let mut moves = Vec::new();
        let mut push_pair = |base: Vec<Complex64>, removed: f64| {
            moves.push(best_pair(&base, removed));
            moves.push(self.place_real_pair(&base, removed, &coarse));
        };
        for (i, &x) in real.iter().enumerate() {
            let z = Complex64::new(x, 0.0);
            let removed = self.log_distance(z);
            for &y in &real[i + 1..] {
                let w = Complex64::new(y, 0.0);
                push_pair(divide_root(&divide_root(&poly, z), w), removed + self.log_distance(w));
            }
        }
        for &z in &complex {
            push_pair(divide_root(&divide_root(&poly, z), z.conj()), 2.0 * self.log_distance(z));
        }
        for &x in &real {
            let z = Complex64::new(x, 0.0);
            let base = divide_root(&poly, z);
            let (gain, u) = self.place_real(&base, self.log_distance(z), &coarse);
            moves.push(Relocation {
                base,
                add: alloc::vec![Complex64::new(u, 0.0)],
                gain,
            });
        }

        moves.retain(|m| m.gain > MIN_HOP_GAIN);
        moves.sort_by(|a, b| b.gain.total_cmp(&a.gain));
        moves.truncate(MAX_HOPS_PER_STATE);
        moves
            .into_iter()
            .map(|m| {
                let c = m.add.iter().fold(m.base, |q, &z| multiply_root(&q, z));
                self.lift(&c.iter().map(|z| z.re).collect::<Vec<_>>())
            })
            .collect()
    }
}

/// Zeros of the polynomial part of `Σ rⱼ hⱼ`, as eigenvalues of the
/// colleague matrix of the three-term recurrence.
fn hermite_roots(r: &[f64]) -> Vec<Complex64> {
    let max = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let Some(d) = r.iter().rposition(|v| v.abs() > 1e-12 * max) else {
        return Vec::new();
    };
    if d == 0 {
        return Vec::new();
    }
    // t·hⱼ = √((j+1)/2) hⱼ₊₁ + √(j/2) hⱼ₋₁, with h_d eliminated in the last row.
    let mut m = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        if j + 1 < d {
            m[(j, j + 1)] = ((j + 1) as f64 / 2.0).sqrt();
        }
        if j > 0 {
            m[(j, j - 1)] = (j as f64 / 2.0).sqrt();
        }
    }
    let beta = (d as f64 / 2.0).sqrt();
    for k in 0..d {
        m[(d - 1, k)] -= beta * r[k] / r[d];
    }
    m.complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect()
}

/// Quotient of the polynomial part of `Σ rⱼ hⱼ` by `(t − root)`; one
/// coefficient shorter. The remainder is dropped.
fn divide_root(r: &[Complex64], root: Complex64) -> Vec<Complex64> {
    let s = r.len();
    // rⱼ = √(j/2) qⱼ₋₁ + √((j+1)/2) qⱼ₊₁ − root·qⱼ, solved from the top.
    let mut q = alloc::vec![Complex64::new(0.0, 0.0); s + 1];
    for j in (1..s).rev() {
        q[j - 1] = (r[j] - q[j + 1] * ((j + 1) as f64 / 2.0).sqrt() + q[j] * root) / (j as f64 / 2.0).sqrt();
    }
    q.truncate(s.saturating_sub(1));
    q
}

/// Product of the polynomial part of `Σ qⱼ hⱼ` with `(t − root)`; one
/// coefficient longer. Multiplication by `t` is tridiagonal in the Hermite
/// functions.
fn multiply_root(q: &[Complex64], root: Complex64) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let at = |j: usize| q.get(j).copied().unwrap_or(zero);
    (0..=q.len())
        .map(|j| {
            let down = if j > 0 { at(j - 1) * (j as f64 / 2.0).sqrt() } else { zero };
            down + at(j + 1) * ((j + 1) as f64 / 2.0).sqrt() - at(j) * root
        })
        .collect()
}

/// Local minima of the smoothed density deeper than this fraction of its
/// peak are treated as candidate zeros of `ψ`.
const ZERO_CANDIDATE_DEPTH: f64 = 0.5;
/// At most `2^MAX_SIGN_FLIPS` sign patterns are tried.
const MAX_SIGN_FLIPS: usize = 5;
const START_GRID: usize = 1024;

/// Starting points for continuous data, built from one side's observations
/// (coordinate when present, momentum otherwise).
///
/// The side's density is estimated by projecting the empirical measure onto
/// the span of the model densities, `e^{−t²} × (polynomial of degree 2s − 2)`
/// in the reduced variable `t`. Its square root is a start with no sign
/// changes. Since a real `ψ` can only vanish where the density has a double
/// zero, every deep local minimum is a candidate sign change and each subset
/// of candidates gives another start. Coefficients are real in the side's
/// own representation.
fn sign_pattern_starts(basis: &ContinuousBasis, obs: &ContinuousObservations) -> Vec<Vec<Complex64>> {
    let s = basis.size();
    let (points, coordinate_side) = if obs.n() > 0 {
        (&obs.coordinate, true)
    } else {
        (&obs.momentum, false)
    };
    let scale = if coordinate_side { basis.scale() } else { 1.0 / basis.scale() };
    let degree = 2 * s - 1;

    // Orthonormal-polynomial moments d_l = mean(h_l(t) e^{t²/2}).
    let mut moments = alloc::vec![0.0; degree];
    for &x in points {
        let t = x / scale;
        let envelope = (0.5 * t * t).exp();
        for (d, h) in moments.iter_mut().zip(hermite_functions(t, degree)) {
            *d += h * envelope;
        }
    }
    moments.iter_mut().for_each(|d| *d /= points.len() as f64);
    let density = |t: f64| -> f64 {
        let envelope = (-0.5 * t * t).exp();
        hermite_functions(t, degree)
            .iter()
            .zip(&moments)
            .map(|(h, d)| h * d)
            .sum::<f64>()
            * envelope
    };

    let half = grid_half_width(s, 1.0);
    let step = 2.0 * half / (START_GRID - 1) as f64;
    let grid: Vec<f64> = (0..START_GRID).map(|i| -half + i as f64 * step).collect();
    let values: Vec<f64> = grid.iter().map(|&t| density(t)).collect();
    let peak = values.iter().fold(0.0f64, |a, &b| a.max(b));

    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x / scale), b.max(x / scale)));
    let mut minima: Vec<(f64, f64)> = (1..START_GRID - 1)
        .filter(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1])
        .filter(|&i| grid[i] > lo && grid[i] < hi)
        .map(|i| (values[i].max(0.0) / peak, grid[i]))
        .filter(|&(depth, _)| depth < ZERO_CANDIDATE_DEPTH)
        .collect();
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima.truncate((s - 1).min(MAX_SIGN_FLIPS));

    let roots: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut starts = Vec::with_capacity(1 << minima.len());
    for mask in 0u32..(1 << minima.len()) {
        let mut c = alloc::vec![Complex64::new(0.0, 0.0); s];
        for (&t, &r) in grid.iter().zip(&roots) {
            if r == 0.0 {
                continue;
            }
            let flips = minima
                .iter()
                .enumerate()
                .filter(|&(k, &(_, z))| mask & (1 << k) != 0 && t > z)
                .count();
            let signed = if flips % 2 == 0 { r } else { -r };
            for (cj, h) in c.iter_mut().zip(hermite_functions(t, s)) {
                cj.re += signed * h;
            }
        }
        if c.iter().all(|z| z.norm_sqr() == 0.0) {
            c[0] = Complex64::new(1.0, 0.0);
        }
        if !coordinate_side {
            // Real in momentum space means cⱼ ∝ iʲ.
            for (j, cj) in c.iter_mut().enumerate() {
                *cj *= minus_i_pow(j).conj();
            }
        }
        starts.push(c);
    }
    starts
}

/// `ln L` of a continuous dataset.
pub fn log_likelihood(
    state: &StateVector,
    basis: &ContinuousBasis,
    obs: &ContinuousObservations,
    density_floor: f64,
) -> Result<f64> {
    LikelihoodModel::continuous(basis, obs)?.log_likelihood(state, density_floor)
}

/// `Σ nᵢ ln|cᵢ|² + Σ mⱼ ln|c̃ⱼ|²`.
pub fn register_log_likelihood(
    state: &StateVector,
    basis: &DiscreteBasis,
    counts: &RegisterCounts,
    density_floor: f64,
) -> Result<f64> {
    LikelihoodModel::register(basis, counts)?.log_likelihood(state, density_floor)
}

pub fn r_matrix(
    state: &StateVector,
    basis: &ContinuousBasis,
    obs: &ContinuousObservations,
    density_floor: f64,
) -> Result<RMatrix> {
    LikelihoodModel::continuous(basis, obs)?.r_matrix(state, density_floor)
}

pub fn register_r_matrix(
    state: &StateVector,
    basis: &DiscreteBasis,
    counts: &RegisterCounts,
    density_floor: f64,
) -> Result<RMatrix> {
    LikelihoodModel::register(basis, counts)?.r_matrix(state, density_floor)
}

/// Solves the likelihood equation for continuous data.
pub fn solve(basis: &ContinuousBasis, obs: &ContinuousObservations, config: &EstimationConfig) -> Result<EstimationResult> {
    let total = obs.total() as u64;
    if total < basis.size() as u64 {
        return Err(Error::TooFewObservations {
            total,
            size: basis.size(),
        });
    }
    LikelihoodModel::continuous(basis, obs)?.solve(config)
}

/// Solves the register likelihood equation
/// `cᵢ = [nᵢ / cᵢ* + Σⱼ mⱼ Uⱼᵢ* / c̃ⱼ*] / (n + m)`.
pub fn solve_register(basis: &DiscreteBasis, counts: &RegisterCounts, config: &EstimationConfig) -> Result<EstimationResult> {
    LikelihoodModel::register(basis, counts)?.solve(config)
}

/// Per-candidate outcome of order selection.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderCandidate {
    pub size: usize,
    pub log_likelihood: f64,
    /// Free real parameters: `s − 1` for one experiment, `2s − 2` for two.
    pub parameters: usize,
    /// `ln L − (parameters / 2) ln(n + m)`.
    pub score: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection {
    pub chosen: usize,
    pub candidates: Vec<OrderCandidate>,
}

/// Fits every candidate size and picks the best penalized likelihood.
///
/// The penalty is the Schwarz (BIC) term. Non-convergent fits are reported
/// but never chosen; ties go to the smaller size.
pub fn select_order(
    obs: &ContinuousObservations,
    basis: &ContinuousBasis,
    sizes: &[usize],
    config: &EstimationConfig,
) -> Result<OrderSelection> {
    if sizes.is_empty() {
        return Err(invalid("order candidates", "list is empty"));
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let ln_total = (obs.total() as f64).ln();
    let mut candidates = Vec::with_capacity(sorted.len());
    for &s in &sorted {
        let b = basis.resized(s)?;
        let fit = solve(&b, obs, config)?;
        let parameters = if obs.n() > 0 && obs.m() > 0 { 2 * s - 2 } else { s - 1 };
        candidates.push(OrderCandidate {
            size: s,
            log_likelihood: fit.log_likelihood,
            parameters,
            score: fit.log_likelihood - 0.5 * parameters as f64 * ln_total,
            converged: fit.converged,
        });
    }
    let chosen = candidates
        .iter()
        .filter(|c| c.converged)
        .fold(None::<&OrderCandidate>, |best, c| match best {
            Some(b) if b.score >= c.score => Some(b),
            _ => Some(c),
        })
        .map(|c| c.size)
        .ok_or(Error::Numerical("no order candidate converged"))?;
    Ok(OrderSelection { chosen, candidates })
}
