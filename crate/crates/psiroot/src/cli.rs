//! Command-line surface: simulate, estimate, analyze, test, ehrenfest-check
//! and reproduce-fig12.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use psiroot_core::basis::{dft_unitary, ContinuousBasis};
use psiroot_core::ehrenfest::{
    harmonic_basis, harmonic_frequencies, CatalogPotential, EhrenfestProblem, HAMILTONIAN_TOLERANCE,
    RESIDUAL_TOLERANCE,
};
use psiroot_core::estimator::{select_order, solve, solve_register, EstimationConfig, EstimationResult};
use psiroot_core::inference::{
    confidence_cone, covariance, degrees_of_freedom, homogeneity_test, state_equality_test, Embedding,
};
use psiroot_core::sampling::{
    grid_half_width, rng_from_seed, sample_coordinate_with, sample_momentum_with, sample_register_with,
    ContinuousObservations, Space,
};
use psiroot_core::state::{fidelity, BasisTag, StateVector};
use psiroot_core::Complex64;
use serde::Serialize;

use crate::formats::{self, ConeJson, EhrenfestJson, FormatError, OrderSelectionJson, ResultJson, StateJson, TestReportJson};
use crate::montecarlo::{Experiment, MonteCarlo};

/// Fidelity the register reproduction is expected to reach.
pub const FIG12_THRESHOLD: f64 = 0.99;
const GRID_POINTS: usize = 401;
const MAX_QUBITS: u32 = 12;

#[derive(Debug, Parser)]
#[command(name = "psiroot", version, about = "Root estimation of state vectors from complementing experiments")]
pub struct Cli {
    /// Directory that receives every output file.
    #[arg(long, global = true, env = "PSIROOT_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw synthetic observations from a known or random state.
    Simulate(SimulateArgs),
    /// Fit a state vector to sample files or register counts.
    Estimate(EstimateArgs),
    /// Confidence cone and covariance for a fit, or a Monte Carlo study.
    Analyze(AnalyzeArgs),
    /// Chi-square test of state equality or homogeneity.
    Test(TestArgs),
    /// Check the Heisenberg matrix equation for a potential.
    EhrenfestCheck(EhrenfestArgs),
    /// Reconstruct a random multi-qubit register and write plot data.
    #[command(name = "reproduce-fig12")]
    ReproduceFig12(FigArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Continuous,
    Register,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PotentialKind {
    Harmonic,
    Quartic,
    Free,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tol_loglik: Option<f64>,
    #[arg(long)]
    pub tol_residual: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub density_floor: Option<f64>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

impl SolverArgs {
    fn config(&self, seed: u64) -> Result<EstimationConfig, CliError> {
        let d = EstimationConfig::default();
        let config = EstimationConfig {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            tolerance_loglik: self.tol_loglik.unwrap_or(d.tolerance_loglik),
            tolerance_residual: self.tol_residual.unwrap_or(d.tolerance_residual),
            damping: self.damping.unwrap_or(d.damping),
            density_floor: self.density_floor.unwrap_or(d.density_floor),
            init_phase_jitter: self.jitter.unwrap_or(d.init_phase_jitter),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed,
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Model::Continuous)]
    pub model: Model,
    /// Number of basis functions.
    #[arg(long = "s", required_unless_present = "state")]
    pub s: Option<usize>,
    /// Coordinate (or direct register) observations.
    #[arg(long = "n", default_value_t = 1000)]
    pub n: u64,
    /// Momentum (or transformed register) observations.
    #[arg(long = "m", default_value_t = 1000)]
    pub m: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Draw a real state instead of a complex one.
    #[arg(long)]
    pub real: bool,
    /// Use this state instead of a random one.
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum, default_value_t = Model::Continuous)]
    pub model: Model,
    #[arg(long = "s", required_unless_present_any = ["orders", "counts"])]
    pub s: Option<usize>,
    /// Basis scale; defaults to the scale in the sample headers.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub coordinate: Option<PathBuf>,
    #[arg(long)]
    pub momentum: Option<PathBuf>,
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Candidate sizes for order selection (experimental).
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Known state, added to the plot grids.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write CSV plot grids.
    #[arg(long)]
    pub grid: bool,
    /// Exit 1 when the solver does not converge.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Result file written by `estimate`.
    #[arg(long, conflicts_with = "trials", required_unless_present = "trials")]
    pub result: Option<PathBuf>,
    /// Number of Monte Carlo trials.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum, default_value_t = Model::Continuous)]
    pub model: Model,
    #[arg(long = "s", required_unless_present_any = ["result", "state"])]
    pub s: Option<usize>,
    #[arg(long = "n", default_value_t = 1000)]
    pub n: u64,
    #[arg(long = "m", default_value_t = 0)]
    pub m: u64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub real: bool,
    #[arg(long)]
    pub state: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub dof: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    /// Result file of the estimate under test.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Reference state (state or result file) for the equality test.
    #[arg(long, conflicts_with = "other", required_unless_present = "other")]
    pub reference: Option<PathBuf>,
    /// Second result file for the homogeneity test.
    #[arg(long)]
    pub other: Option<PathBuf>,
    #[arg(long)]
    pub dof: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EhrenfestArgs {
    #[arg(long, value_enum, default_value_t = PotentialKind::Harmonic)]
    pub potential: PotentialKind,
    #[arg(long = "s", default_value_t = 20)]
    pub s: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    /// Spring constant; also sets the basis scale.
    #[arg(long, default_value_t = 1.0)]
    pub stiffness: f64,
    /// Quartic coupling `g` in `g x⁴`.
    #[arg(long, default_value_t = 1.0)]
    pub coupling: f64,
    /// Basis frequencies; defaults to the oscillator ladder.
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<f64>>,
    /// Shift one frequency, written `J:DELTA`.
    #[arg(long)]
    pub perturb: Option<String>,
    #[arg(long, default_value_t = RESIDUAL_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = HAMILTONIAN_TOLERANCE)]
    pub hamiltonian_tolerance: f64,
    /// Exit 1 when the check fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FigArgs {
    #[arg(long, default_value_t = 8)]
    pub qubits: u32,
    #[arg(long = "n", default_value_t = 10_000)]
    pub n: u64,
    #[arg(long = "m", default_value_t = 10_000)]
    pub m: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Compute(#[from] psiroot_core::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Format(_) => 2,
            Self::Compute(_) | Self::Failed(_) => 1,
        }
    }
}

/// Parses `argv`, runs one command and returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("psiroot: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns the files it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let out = Output::new(&cli.out_dir)?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Estimate(a) => estimate(a, out),
        Command::Analyze(a) => analyze(a, out),
        Command::Test(a) => test(a, out),
        Command::EhrenfestCheck(a) => ehrenfest_check(a, out),
        Command::ReproduceFig12(a) => reproduce_fig12(a, out),
    }
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = formats::output_path(&self.dir, name);
        self.written.push(p.clone());
        p
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let p = self.path(name);
        formats::write_json(&p, value)?;
        Ok(())
    }

    fn grid(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let p = self.path(name);
        formats::write_grid(&p, header, rows)?;
        Ok(())
    }

    fn done(self) -> Vec<PathBuf> {
        self.written
    }
}

fn usize_count(v: u64, name: &str) -> Result<usize, CliError> {
    usize::try_from(v).map_err(|_| CliError::Usage(format!("--{name} is too large")))
}

fn require_size(s: Option<usize>) -> Result<usize, CliError> {
    match s {
        Some(0) => Err(CliError::Usage("--s must be at least 1".into())),
        Some(s) => Ok(s),
        None => Err(CliError::Usage("--s is required".into())),
    }
}

/// A given state file, or a random state drawn from `rng`.
fn truth_state<R: rand::Rng + ?Sized>(
    path: Option<&Path>,
    s: Option<usize>,
    tag: BasisTag,
    real: bool,
    rng: &mut R,
) -> Result<StateVector, CliError> {
    if let Some(p) = path {
        let state = formats::read_state(p)?;
        if let Some(s) = s {
            if s != state.len() {
                return Err(CliError::Usage(format!("--s {s} disagrees with {} (s = {})", p.display(), state.len())));
            }
        }
        return Ok(StateVector::normalized(state.coefficients().to_vec(), tag)?);
    }
    let s = require_size(s)?;
    Ok(if real {
        StateVector::random_real(s, tag, rng)?
    } else {
        StateVector::random(s, tag, rng)?
    })
}

fn simulate(a: &SimulateArgs, mut out: Output) -> Result<Vec<PathBuf>, CliError> {
    if !(a.scale > 0.0 && a.scale.is_finite()) {
        return Err(CliError::Usage("--scale must be positive".into()));
    }
    if a.n == 0 && a.m == 0 {
        return Err(CliError::Usage("--n and --m cannot both be zero".into()));
    }
    let mut rng = rng_from_seed(a.seed);
    match a.model {
        Model::Continuous => {
            let size = match (&a.state, a.s) {
                (Some(p), _) => formats::read_state(p)?.len(),
                (None, s) => require_size(s)?,
            };
            let basis = ContinuousBasis::with_scale(size, a.scale)?;
            let tag = BasisTag::of_continuous(&basis);
            let truth = truth_state(a.state.as_deref(), a.s, tag, a.real, &mut rng)?;
            let n = usize_count(a.n, "n")?;
            let m = usize_count(a.m, "m")?;
            let state_path = out.path("state.json");
            let coordinate = (n > 0)
                .then(|| sample_coordinate_with(&truth, &basis, n, &mut rng))
                .transpose()?;
            let momentum = (m > 0)
                .then(|| sample_momentum_with(&truth, &basis, m, &mut rng))
                .transpose()?;
            formats::write_state(&state_path, &truth)?;
            if let Some(sample) = coordinate {
                let p = out.path("coordinate.csv");
                formats::write_sample(&p, &sample, a.scale)?;
            }
            if let Some(sample) = momentum {
                let p = out.path("momentum.csv");
                formats::write_sample(&p, &sample, a.scale)?;
            }
        }
        Model::Register => {
            let size = match (&a.state, a.s) {
                (Some(p), _) => formats::read_state(p)?.len(),
                (None, s) => require_size(s)?,
            };
            let basis = dft_unitary(size)?;
            let tag = BasisTag::of_discrete(&basis);
            let truth = truth_state(a.state.as_deref(), a.s, tag, a.real, &mut rng)?;
            let counts = sample_register_with(&truth, &basis, a.n, a.m, &mut rng)?;
            let state_path = out.path("state.json");
            formats::write_state(&state_path, &truth)?;
            let p = out.path("counts.json");
            formats::write_counts(&p, &counts)?;
        }
    }
    Ok(out.done())
}

fn check_space(path: &Path, file: &formats::SampleFile, expected: Space) -> Result<(), CliError> {
    if file.sample.space() != expected {
        return Err(CliError::Usage(format!(
            "{} holds {} data but was passed as --{}",
            path.display(),
            file.sample.space().as_str(),
            expected.as_str()
        )));
    }
    Ok(())
}

fn resolve_scale(cli: Option<f64>, headers: &[(&Path, Option<f64>)]) -> Result<f64, CliError> {
    if let Some(a) = cli {
        if !(a > 0.0 && a.is_finite()) {
            return Err(CliError::Usage("--scale must be positive".into()));
        }
        return Ok(a);
    }
    let mut found: Option<(&Path, f64)> = None;
    for &(p, scale) in headers {
        if let Some(a) = scale {
            match found {
                Some((q, b)) if a != b => {
                    return Err(CliError::Usage(format!(
                        "scale {a} in {} disagrees with {b} in {}; pass --scale",
                        p.display(),
                        q.display()
                    )));
                }
                _ => found = Some((p, a)),
            }
        }
    }
    Ok(found.map_or(1.0, |(_, a)| a))
}

fn finish_fit(result: &EstimationResult, strict: bool) -> Result<(), CliError> {
    if strict && !result.converged {
        return Err(CliError::Failed(format!(
            "solver did not converge in {} iterations (residual {:e})",
            result.iterations, result.residual
        )));
    }
    Ok(())
}

fn estimate(a: &EstimateArgs, mut out: Output) -> Result<Vec<PathBuf>, CliError> {
    let config = a.solver.config(a.seed)?;
    match a.model {
        Model::Continuous => {
            if a.counts.is_some() {
                return Err(CliError::Usage("--counts needs --model register".into()));
            }
            if a.coordinate.is_none() && a.momentum.is_none() {
                return Err(CliError::Usage("give --coordinate, --momentum or both".into()));
            }
            let mut headers = Vec::new();
            let mut samples = Vec::new();
            for (path, space) in [(&a.coordinate, Space::Coordinate), (&a.momentum, Space::Momentum)] {
                if let Some(p) = path {
                    let file = formats::read_sample(p)?;
                    check_space(p, &file, space)?;
                    headers.push((p.as_path(), file.scale));
                    samples.push(file.sample);
                }
            }
            let scale = resolve_scale(a.scale, &headers)?;
            let truth = a.truth.as_deref().map(formats::read_state).transpose()?;
            let obs = ContinuousObservations::from_samples(&samples)?;
            let size = match (&a.orders, a.s) {
                (Some(orders), _) => {
                    if orders.contains(&0) {
                        return Err(CliError::Usage("--orders entries must be at least 1".into()));
                    }
                    let basis = ContinuousBasis::with_scale(1, scale)?;
                    let selection = select_order(&obs, &basis, orders, &config)?;
                    out.json("order_selection.json", &OrderSelectionJson::from(&selection))?;
                    selection.chosen
                }
                (None, s) => require_size(s)?,
            };
            let basis = ContinuousBasis::with_scale(size, scale)?;
            let result = solve(&basis, &obs, &config)?;
            out.json("estimate.json", &ResultJson::from(&result))?;
            if a.grid {
                write_continuous_grids(&mut out, &basis, &result.estimate, truth.as_ref())?;
            }
            finish_fit(&result, a.strict)?;
        }
        Model::Register => {
            let Some(path) = &a.counts else {
                return Err(CliError::Usage("--model register needs --counts".into()));
            };
            if a.coordinate.is_some() || a.momentum.is_some() || a.orders.is_some() {
                return Err(CliError::Usage(
                    "--coordinate, --momentum and --orders apply to --model continuous".into(),
                ));
            }
            let counts = formats::read_counts(path)?;
            if let Some(s) = a.s {
                if s != counts.dimension() {
                    return Err(CliError::Usage(format!(
                        "--s {s} disagrees with {} (dimension {})",
                        path.display(),
                        counts.dimension()
                    )));
                }
            }
            let truth = a.truth.as_deref().map(formats::read_state).transpose()?;
            let basis = dft_unitary(counts.dimension())?;
            let result = solve_register(&basis, &counts, &config)?;
            out.json("estimate.json", &ResultJson::from(&result))?;
            if a.grid {
                let (header, rows) = register_probability_grid(&result.estimate, truth.as_ref(), &basis)?;
                out.grid("grid_probabilities.csv", &header, &rows)?;
                let (header, rows) = amplitude_grid(&result.estimate, truth.as_ref())?;
                out.grid("grid_amplitudes.csv", &header, &rows)?;
            }
            finish_fit(&result, a.strict)?;
        }
    }
    Ok(out.done())
}

/// Estimated coefficients rotated by the global phase that best matches
/// `reference`.
pub fn align_phase(estimate: &StateVector, reference: &StateVector) -> Vec<Complex64> {
    let overlap: Complex64 = estimate
        .coefficients()
        .iter()
        .zip(reference.coefficients())
        .map(|(e, r)| e.conj() * r)
        .sum();
    let norm = overlap.norm();
    let phase = if norm > 0.0 { overlap / norm } else { Complex64::new(1.0, 0.0) };
    estimate.coefficients().iter().map(|c| c * phase).collect()
}

fn write_continuous_grids(
    out: &mut Output,
    basis: &ContinuousBasis,
    estimate: &StateVector,
    truth: Option<&StateVector>,
) -> Result<(), CliError> {
    if let Some(t) = truth {
        if t.len() != estimate.len() {
            return Err(CliError::Usage(format!(
                "--truth has s = {} but the fit has s = {}",
                t.len(),
                estimate.len()
            )));
        }
    }
    let truth = truth.map(|t| StateVector::normalized(t.coefficients().to_vec(), estimate.basis_tag())).transpose()?;
    let aligned = match &truth {
        Some(t) => StateVector::normalized(align_phase(estimate, t), estimate.basis_tag())?,
        None => estimate.clone(),
    };
    let half = grid_half_width(basis.size(), basis.scale());
    for (name, space) in [("grid_coordinate.csv", Space::Coordinate), ("grid_momentum.csv", Space::Momentum)] {
        let var = if space == Space::Coordinate { "x" } else { "p" };
        let mut header = vec![var, "density_est", "re_est", "im_est"];
        if truth.is_some() {
            header.extend(["density_true", "re_true", "im_true"]);
        }
        let amplitude = |state: &StateVector, t: f64| match space {
            Space::Coordinate => state.amplitude_at(basis, t),
            Space::Momentum => state.momentum_amplitude_at(basis, t),
        };
        let mut rows = Vec::with_capacity(GRID_POINTS);
        for i in 0..GRID_POINTS {
            let t = -half + 2.0 * half * i as f64 / (GRID_POINTS - 1) as f64;
            let e = amplitude(&aligned, t)?;
            let mut row = vec![t, e.norm_sqr(), e.re, e.im];
            if let Some(state) = &truth {
                let z = amplitude(state, t)?;
                row.extend([z.norm_sqr(), z.re, z.im]);
            }
            rows.push(row);
        }
        out.grid(name, &header, &rows)?;
    }
    Ok(())
}

type Grid = (Vec<&'static str>, Vec<Vec<f64>>);

fn register_probability_grid(
    estimate: &StateVector,
    truth: Option<&StateVector>,
    basis: &psiroot_core::basis::DiscreteBasis,
) -> Result<Grid, CliError> {
    let est_conj = estimate.conjugate_amplitudes(basis)?;
    let true_parts = truth
        .map(|t| -> Result<_, CliError> {
            if t.len() != estimate.len() {
                return Err(CliError::Usage("--truth dimension disagrees with the counts".into()));
            }
            let t = StateVector::normalized(t.coefficients().to_vec(), estimate.basis_tag())?;
            let conj = t.conjugate_amplitudes(basis)?;
            Ok((t, conj))
        })
        .transpose()?;
    let mut header = vec!["index", "direct_est", "conjugate_est"];
    if true_parts.is_some() {
        header.extend(["direct_true", "conjugate_true"]);
    }
    let rows = (0..estimate.len())
        .map(|i| {
            let mut row = vec![
                i as f64,
                estimate.coefficients()[i].norm_sqr(),
                est_conj[i].norm_sqr(),
            ];
            if let Some((t, conj)) = &true_parts {
                row.extend([t.coefficients()[i].norm_sqr(), conj[i].norm_sqr()]);
            }
            row
        })
        .collect();
    Ok((header, rows))
}

fn amplitude_grid(estimate: &StateVector, truth: Option<&StateVector>) -> Result<Grid, CliError> {
    let (aligned, truth) = match truth {
        Some(t) => {
            if t.len() != estimate.len() {
                return Err(CliError::Usage("--truth dimension disagrees with the fit".into()));
            }
            (align_phase(estimate, t), Some(t))
        }
        None => (estimate.coefficients().to_vec(), None),
    };
    let mut header = vec!["index", "re_est", "im_est"];
    if truth.is_some() {
        header.extend(["re_true", "im_true"]);
    }
    let rows = aligned
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut row = vec![i as f64, e.re, e.im];
            if let Some(t) = truth {
                let z = t.coefficients()[i];
                row.extend([z.re, z.im]);
            }
            row
        })
        .collect();
    Ok((header, rows))
}

#[derive(Debug, Serialize)]
struct CovarianceJson {
    embedding: &'static str,
    sample_size: u64,
    trace: f64,
    eigenvalues: Vec<f64>,
    entries: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct AnalysisJson {
    cone: ConeJson,
    covariance: CovarianceJson,
}

fn analyze(a: &AnalyzeArgs, mut out: Output) -> Result<Vec<PathBuf>, CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
    }
    if let Some(path) = &a.result {
        let stored = formats::read_result(path)?;
        let n_total = stored.n + stored.m;
        let dof = a
            .dof
            .unwrap_or_else(|| degrees_of_freedom(stored.estimate.len(), !stored.phases_unidentified));
        let cone = confidence_cone(&stored.estimate, n_total, a.alpha, dof)?;
        let cov = covariance(&stored.estimate, n_total)?;
        let e = cov.entries();
        let json = AnalysisJson {
            cone: ConeJson::from(&cone),
            covariance: CovarianceJson {
                embedding: match cov.embedding() {
                    Embedding::Real => "real",
                    Embedding::Complex => "complex",
                },
                sample_size: cov.sample_size(),
                trace: cov.trace(),
                eigenvalues: cov.eigenvalues(),
                entries: (0..e.nrows()).map(|i| e.row(i).iter().copied().collect()).collect(),
            },
        };
        out.json("analysis.json", &json)?;
        return Ok(out.done());
    }
    let trials = a.trials.expect("clap requires --trials without --result");
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    if a.n == 0 && a.m == 0 {
        return Err(CliError::Usage("--n and --m cannot both be zero".into()));
    }
    let config = a.solver.config(a.seed)?;
    let mut rng = rng_from_seed(a.seed);
    let (truth, experiment) = match a.model {
        Model::Continuous => {
            if !(a.scale > 0.0 && a.scale.is_finite()) {
                return Err(CliError::Usage("--scale must be positive".into()));
            }
            let size = match (&a.state, a.s) {
                (Some(p), _) => formats::read_state(p)?.len(),
                (None, s) => require_size(s)?,
            };
            let basis = ContinuousBasis::with_scale(size, a.scale)?;
            let truth = truth_state(a.state.as_deref(), a.s, BasisTag::of_continuous(&basis), a.real, &mut rng)?;
            let (n, m) = (usize_count(a.n, "n")?, usize_count(a.m, "m")?);
            (truth, Experiment::Continuous { basis, n, m })
        }
        Model::Register => {
            let size = match (&a.state, a.s) {
                (Some(p), _) => formats::read_state(p)?.len(),
                (None, s) => require_size(s)?,
            };
            let basis = dft_unitary(size)?;
            let truth = truth_state(a.state.as_deref(), a.s, BasisTag::of_discrete(&basis), a.real, &mut rng)?;
            (truth, Experiment::Register { basis, n: a.n, m: a.m })
        }
    };
    let complementary = a.n > 0 && a.m > 0;
    let dof = a.dof.unwrap_or_else(|| degrees_of_freedom(truth.len(), complementary));
    let mc = MonteCarlo {
        truth,
        experiment,
        config,
        alpha: a.alpha,
        dof,
    };
    let results = mc.run(a.seed, trials)?;
    out.json("montecarlo.json", &mc.summarize(&results)?)?;
    Ok(out.done())
}

fn test(a: &TestArgs, mut out: Output) -> Result<Vec<PathBuf>, CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
    }
    let first = formats::read_result(&a.estimate)?;
    let default_dof = degrees_of_freedom(first.estimate.len(), !first.phases_unidentified);
    let dof = a.dof.unwrap_or(default_dof);
    let check_len = |s: &StateVector, p: &Path| {
        if s.len() != first.estimate.len() {
            return Err(CliError::Usage(format!(
                "{} has s = {} but {} has s = {}",
                p.display(),
                s.len(),
                a.estimate.display(),
                first.estimate.len()
            )));
        }
        Ok(())
    };
    let json = if let Some(p) = &a.reference {
        let reference = formats::read_state_or_result(p)?;
        check_len(&reference, p)?;
        let report = state_equality_test(&first.estimate, &reference, first.n + first.m, dof)?;
        TestReportJson::new("state_equality", &report, a.alpha)
    } else {
        let p = a.other.as_ref().expect("clap requires --reference or --other");
        let second = formats::read_result(p)?;
        check_len(&second.estimate, p)?;
        let report = homogeneity_test(&first.estimate, first.n + first.m, &second.estimate, second.n + second.m, dof)?;
        TestReportJson::new("homogeneity", &report, a.alpha)
    };
    out.json("test.json", &json)?;
    Ok(out.done())
}

fn parse_perturbation(text: &str, size: usize) -> Result<(usize, f64), CliError> {
    let bad = || CliError::Usage(format!("--perturb expects J:DELTA, got {text:?}"));
    let (j, d) = text.split_once(':').ok_or_else(bad)?;
    let j: usize = j.trim().parse().map_err(|_| bad())?;
    let d: f64 = d.trim().parse().map_err(|_| bad())?;
    if j >= size || !d.is_finite() {
        return Err(bad());
    }
    Ok((j, d))
}

fn ehrenfest_check(a: &EhrenfestArgs, mut out: Output) -> Result<Vec<PathBuf>, CliError> {
    if a.s == 0 {
        return Err(CliError::Usage("--s must be at least 1".into()));
    }
    let potential = match a.potential {
        PotentialKind::Harmonic => CatalogPotential::Harmonic { stiffness: a.stiffness },
        PotentialKind::Quartic => CatalogPotential::Quartic { coupling: a.coupling },
        PotentialKind::Free => CatalogPotential::Free,
    };
    let mut frequencies = match &a.frequencies {
        Some(w) if w.len() != a.s => {
            return Err(CliError::Usage(format!("--frequencies has {} entries for s = {}", w.len(), a.s)));
        }
        Some(w) => w.clone(),
        None => harmonic_frequencies(a.s, a.mass, a.stiffness),
    };
    if let Some(text) = &a.perturb {
        let (j, d) = parse_perturbation(text, a.s)?;
        frequencies[j] += d;
    }
    let basis = harmonic_basis(a.s, a.mass, a.stiffness)?;
    let problem = EhrenfestProblem::new(a.mass, potential, frequencies.clone(), basis)?;
    let report = problem.check_with(a.tolerance, a.hamiltonian_tolerance)?;
    out.json("ehrenfest.json", &EhrenfestJson::new(potential.name(), a.mass, frequencies, &report))?;
    if a.strict && !report.pass {
        return Err(CliError::Failed(format!(
            "quantization check failed: residual {:e}, hamiltonian deviation {:e}",
            report.max_residual, report.hamiltonian_deviation
        )));
    }
    Ok(out.done())
}

#[derive(Debug, Serialize)]
struct FigJson {
    qubits: u32,
    s: usize,
    n: u64,
    m: u64,
    seed: u64,
    fidelity: f64,
    threshold: f64,
    meets_threshold: bool,
    truth: StateJson,
    result: ResultJson,
}

fn reproduce_fig12(a: &FigArgs, mut out: Output) -> Result<Vec<PathBuf>, CliError> {
    if a.qubits == 0 || a.qubits > MAX_QUBITS {
        return Err(CliError::Usage(format!("--qubits must lie in 1..={MAX_QUBITS}")));
    }
    if a.n == 0 && a.m == 0 {
        return Err(CliError::Usage("--n and --m cannot both be zero".into()));
    }
    let config = a.solver.config(a.seed)?;
    let s = 1usize << a.qubits;
    let basis = dft_unitary(s)?;
    let mut rng = rng_from_seed(a.seed);
    let truth = StateVector::random(s, BasisTag::of_discrete(&basis), &mut rng)?;
    let counts = sample_register_with(&truth, &basis, a.n, a.m, &mut rng)?;
    let result = solve_register(&basis, &counts, &config)?;
    let f = fidelity(&result.estimate, &truth)?;

    let (mut header, mut rows) = register_probability_grid(&result.estimate, Some(&truth), &basis)?;
    header.extend(["direct_observed", "conjugate_observed"]);
    for (i, row) in rows.iter_mut().enumerate() {
        let direct = if a.n > 0 { counts.direct()[i] as f64 / a.n as f64 } else { 0.0 };
        let conjugate = if a.m > 0 { counts.conjugate()[i] as f64 / a.m as f64 } else { 0.0 };
        row.extend([direct, conjugate]);
    }
    out.grid("fig12_probabilities.csv", &header, &rows)?;
    let (header, rows) = amplitude_grid(&result.estimate, Some(&truth))?;
    out.grid("fig12_amplitudes.csv", &header, &rows)?;
    out.json(
        "fig12.json",
        &FigJson {
            qubits: a.qubits,
            s,
            n: a.n,
            m: a.m,
            seed: a.seed,
            fidelity: f,
            threshold: FIG12_THRESHOLD,
            meets_threshold: f >= FIG12_THRESHOLD,
            truth: StateJson::from(&truth),
            result: ResultJson::from(&result),
        },
    )?;
    finish_fit(&result, a.strict)?;
    Ok(out.done())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbation_syntax() {
        assert_eq!(parse_perturbation("3:1e-3", 5).unwrap(), (3, 1e-3));
        assert!(parse_perturbation("5:1", 5).is_err());
        assert!(parse_perturbation("1", 5).is_err());
        assert!(parse_perturbation("a:1", 5).is_err());
    }

    #[test]
    fn alignment_removes_global_phase() {
        let tag = BasisTag::Hermite { scale: 1.0 };
        let c = vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        let a = StateVector::new(c.clone(), tag).unwrap();
        let rotated: Vec<Complex64> = c.iter().map(|z| z * Complex64::from_polar(1.0, 1.1)).collect();
        let b = StateVector::normalized(rotated, tag).unwrap();
        let aligned = align_phase(&b, &a);
        for (x, y) in aligned.iter().zip(a.coefficients()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
