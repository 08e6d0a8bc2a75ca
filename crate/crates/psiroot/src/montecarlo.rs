//! Seeded Monte Carlo trials: sample from a known state, estimate, compare.

use psiroot_core::basis::{ContinuousBasis, DiscreteBasis};
use psiroot_core::estimator::{solve, solve_register, EstimationConfig, EstimationResult};
use psiroot_core::inference::{chi2_cdf, confidence_cone, ks_test};
use psiroot_core::sampling::{rng_from_seed, sample_continuous_with, sample_register_with};
use psiroot_core::state::{fidelity, StateVector};
use psiroot_core::Result;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone)]
pub enum Experiment {
    Continuous { basis: ContinuousBasis, n: usize, m: usize },
    Register { basis: DiscreteBasis, n: u64, m: u64 },
}

impl Experiment {
    pub fn n_total(&self) -> u64 {
        match self {
            Self::Continuous { n, m, .. } => (n + m) as u64,
            Self::Register { n, m, .. } => n + m,
        }
    }

    /// Draws one data set with `seed` and fits it with the same seed.
    pub fn simulate_and_fit(&self, truth: &StateVector, config: &EstimationConfig, seed: u64) -> Result<EstimationResult> {
        let mut rng = rng_from_seed(seed);
        let config = EstimationConfig { seed, ..config.clone() };
        match self {
            Self::Continuous { basis, n, m } => {
                let obs = sample_continuous_with(truth, basis, *n, *m, &mut rng)?;
                solve(basis, &obs, &config)
            }
            Self::Register { basis, n, m } => {
                let counts = sample_register_with(truth, basis, *n, *m, &mut rng)?;
                solve_register(basis, &counts, &config)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub truth: StateVector,
    pub experiment: Experiment,
    pub config: EstimationConfig,
    pub alpha: f64,
    pub dof: usize,
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub result: EstimationResult,
    pub fidelity: f64,
    /// `4 (n + m) (1 − F)`.
    pub statistic: f64,
    pub covered: bool,
}

impl MonteCarlo {
    pub fn trial_seed(base: u64, index: usize) -> u64 {
        base.wrapping_add(index as u64)
    }

    pub fn run_trial(&self, base_seed: u64, index: usize) -> Result<Trial> {
        let seed = Self::trial_seed(base_seed, index);
        let result = self.experiment.simulate_and_fit(&self.truth, &self.config, seed)?;
        let n_total = self.experiment.n_total();
        let f = fidelity(&result.estimate, &self.truth)?;
        let cone = confidence_cone(&result.estimate, n_total, self.alpha, self.dof)?;
        let covered = cone.contains(&self.truth)?;
        Ok(Trial {
            index,
            seed,
            fidelity: f,
            statistic: 4.0 * n_total as f64 * (1.0 - f),
            covered,
            result,
        })
    }

    /// Runs `trials` trials concurrently; the output is in trial order.
    pub fn run(&self, base_seed: u64, trials: usize) -> Result<Vec<Trial>> {
        (0..trials)
            .into_par_iter()
            .map(|i| self.run_trial(base_seed, i))
            .collect()
    }

    pub fn summarize(&self, trials: &[Trial]) -> Result<Summary> {
        let k = trials.len() as f64;
        let statistics: Vec<f64> = trials.iter().map(|t| t.statistic).collect();
        let (ks_statistic, ks_p_value) = ks_test(&statistics, |x| chi2_cdf(self.dof, x).unwrap_or(0.0))?;
        let n_total = self.experiment.n_total();
        Ok(Summary {
            trials: trials.len(),
            dof: self.dof,
            alpha: self.alpha,
            n_total,
            mean_statistic: statistics.iter().sum::<f64>() / k,
            ks_statistic,
            ks_p_value,
            coverage: trials.iter().filter(|t| t.covered).count() as f64 / k,
            converged: trials.iter().filter(|t| t.result.converged).count(),
            mean_fidelity: trials.iter().map(|t| t.fidelity).sum::<f64>() / k,
            min_fidelity: trials.iter().map(|t| t.fidelity).fold(f64::INFINITY, f64::min),
            max_lambda_error: trials
                .iter()
                .filter(|t| t.result.converged)
                .map(|t| (t.result.lambda / n_total as f64 - 1.0).abs())
                .fold(0.0, f64::max),
            outcomes: trials.iter().map(TrialRow::from).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub fidelity: f64,
    pub statistic: f64,
    pub covered: bool,
    pub converged: bool,
    pub iterations: usize,
    pub lambda: f64,
}

impl From<&Trial> for TrialRow {
    fn from(t: &Trial) -> Self {
        Self {
            trial: t.index,
            seed: t.seed,
            fidelity: t.fidelity,
            statistic: t.statistic,
            covered: t.covered,
            converged: t.result.converged,
            iterations: t.result.iterations,
            lambda: t.result.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub dof: usize,
    pub alpha: f64,
    pub n_total: u64,
    pub mean_statistic: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub coverage: f64,
    pub converged: usize,
    pub mean_fidelity: f64,
    pub min_fidelity: f64,
    pub max_lambda_error: f64,
    pub outcomes: Vec<TrialRow>,
}
