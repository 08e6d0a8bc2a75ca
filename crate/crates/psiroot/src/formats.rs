//! File formats: state and result JSON, sample CSV, register counts JSON.
//!
//! Floats are written in Rust's shortest round-trip form, so every finite
//! double survives a write/read cycle bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use psiroot_core::basis::RegisterTransform;
use psiroot_core::ehrenfest::EhrenfestReport;
use psiroot_core::estimator::{EstimationResult, OrderSelection};
use psiroot_core::inference::{ConfidenceCone, TestReport};
use psiroot_core::sampling::{RegisterCounts, Sample, Space};
use psiroot_core::state::{BasisTag, StateVector};
use psiroot_core::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}:{line}: {message}")]
    Line { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    fn file(path: &Path, message: impl Into<String>) -> Self {
        Self::File {
            path: path.display().to_string(),
            message: message.into(),
        }
    }

    fn line(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Line {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::line(path, e.line(), e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    write_text(path, &to_json(value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BasisJson {
    Hermite { scale: f64 },
    Register { transform: String },
}

impl From<BasisTag> for BasisJson {
    fn from(tag: BasisTag) -> Self {
        match tag {
            BasisTag::Hermite { scale } => Self::Hermite { scale },
            BasisTag::Register { transform } => Self::Register {
                transform: match transform {
                    RegisterTransform::Dft => "dft",
                    RegisterTransform::Custom => "custom",
                }
                .to_string(),
            },
        }
    }
}

impl BasisJson {
    fn to_tag(&self) -> Result<BasisTag, String> {
        match self {
            Self::Hermite { scale } if *scale > 0.0 && scale.is_finite() => Ok(BasisTag::Hermite { scale: *scale }),
            Self::Hermite { scale } => Err(format!("invalid basis scale {scale}")),
            Self::Register { transform } => match transform.as_str() {
                "dft" => Ok(BasisTag::Register {
                    transform: RegisterTransform::Dft,
                }),
                "custom" => Ok(BasisTag::Register {
                    transform: RegisterTransform::Custom,
                }),
                other => Err(format!("unknown register transform {other:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateJson {
    pub s: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub basis: BasisJson,
}

impl From<&StateVector> for StateJson {
    fn from(state: &StateVector) -> Self {
        Self {
            s: state.len(),
            re: state.coefficients().iter().map(|z| z.re).collect(),
            im: state.coefficients().iter().map(|z| z.im).collect(),
            basis: state.basis_tag().into(),
        }
    }
}

impl StateJson {
    pub fn to_state(&self) -> Result<StateVector, String> {
        if self.re.len() != self.s || self.im.len() != self.s {
            return Err(format!(
                "s = {} but re has {} and im has {} entries",
                self.s,
                self.re.len(),
                self.im.len()
            ));
        }
        let c = self.re.iter().zip(&self.im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        StateVector::new(c, self.basis.to_tag()?).map_err(|e| e.to_string())
    }
}

pub fn write_state(path: &Path, state: &StateVector) -> Result<(), FormatError> {
    write_json(path, &StateJson::from(state))
}

pub fn read_state(path: &Path) -> Result<StateVector, FormatError> {
    let json: StateJson = parse_json(path)?;
    json.to_state().map_err(|m| FormatError::file(path, m))
}

/// Header line of a sample file.
pub fn sample_header(space: Space, scale: f64) -> String {
    format!("# space={} scale={}", space.as_str(), scale)
}

pub fn format_sample(sample: &Sample, scale: f64) -> String {
    let mut out = sample_header(sample.space(), scale);
    out.push('\n');
    for x in sample.points() {
        writeln!(out, "{x:?}").expect("writing to a string");
    }
    out
}

pub fn write_sample(path: &Path, sample: &Sample, scale: f64) -> Result<(), FormatError> {
    write_text(path, &format_sample(sample, scale))
}

/// A sample file together with the basis scale recorded in its header.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub sample: Sample,
    pub scale: Option<f64>,
}

pub fn parse_sample(path: &Path, text: &str) -> Result<SampleFile, FormatError> {
    let mut lines = text.lines().enumerate();
    let (space, scale) = loop {
        match lines.next() {
            None => return Err(FormatError::file(path, "no observations")),
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break parse_header(path, i + 1, l)?,
        }
    };
    let mut points = Vec::new();
    for (i, l) in lines {
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let x: f64 = t
            .parse()
            .map_err(|_| FormatError::line(path, i + 1, format!("not a number: {t:?}")))?;
        if !x.is_finite() {
            return Err(FormatError::line(path, i + 1, format!("non-finite value {t}")));
        }
        points.push(x);
    }
    if points.is_empty() {
        return Err(FormatError::file(path, "no observations"));
    }
    let sample = Sample::new(space, points).map_err(|e| FormatError::file(path, e.to_string()))?;
    Ok(SampleFile { sample, scale })
}

fn parse_header(path: &Path, line: usize, text: &str) -> Result<(Space, Option<f64>), FormatError> {
    let Some(body) = text.trim().strip_prefix('#') else {
        return Err(FormatError::line(path, line, "missing header `# space=coordinate|momentum scale=<a>`"));
    };
    let mut space = None;
    let mut scale = None;
    for field in body.split_whitespace() {
        match field.split_once('=') {
            Some(("space", "coordinate")) => space = Some(Space::Coordinate),
            Some(("space", "momentum")) => space = Some(Space::Momentum),
            Some(("space", other)) => {
                return Err(FormatError::line(path, line, format!("unknown space tag {other:?}")));
            }
            Some(("scale", v)) => {
                let a: f64 = v
                    .parse()
                    .map_err(|_| FormatError::line(path, line, format!("bad scale {v:?}")))?;
                if !(a > 0.0 && a.is_finite()) {
                    return Err(FormatError::line(path, line, format!("scale must be positive, got {v}")));
                }
                scale = Some(a);
            }
            _ => return Err(FormatError::line(path, line, format!("unknown header field {field:?}"))),
        }
    }
    let space = space.ok_or_else(|| FormatError::line(path, line, "missing space tag"))?;
    Ok((space, scale))
}

pub fn read_sample(path: &Path) -> Result<SampleFile, FormatError> {
    parse_sample(path, &read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountsJson {
    direct: Vec<i64>,
    conjugate: Vec<i64>,
}

pub fn format_counts(counts: &RegisterCounts) -> String {
    let json = CountsJson {
        direct: counts.direct().iter().map(|&k| k as i64).collect(),
        conjugate: counts.conjugate().iter().map(|&k| k as i64).collect(),
    };
    to_json(&json)
}

pub fn write_counts(path: &Path, counts: &RegisterCounts) -> Result<(), FormatError> {
    write_text(path, &format_counts(counts))
}

pub fn parse_counts(path: &Path, text: &str) -> Result<RegisterCounts, FormatError> {
    let json: CountsJson =
        serde_json::from_str(text).map_err(|e| FormatError::line(path, e.line(), e.to_string()))?;
    let check = |name: &str, v: &[i64]| -> Result<Vec<u64>, FormatError> {
        v.iter()
            .enumerate()
            .map(|(i, &k)| {
                u64::try_from(k).map_err(|_| FormatError::file(path, format!("{name}[{i}] is negative ({k})")))
            })
            .collect()
    };
    let direct = check("direct", &json.direct)?;
    let conjugate = check("conjugate", &json.conjugate)?;
    if direct.iter().chain(&conjugate).all(|&k| k == 0) {
        return Err(FormatError::file(path, "no observations"));
    }
    RegisterCounts::new(direct, conjugate).map_err(|e| FormatError::file(path, e.to_string()))
}

pub fn read_counts(path: &Path) -> Result<RegisterCounts, FormatError> {
    parse_counts(path, &read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultJson {
    pub estimate: StateJson,
    pub lambda: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub floor_hits: u64,
    pub phases_unidentified: bool,
    pub n: u64,
    pub m: u64,
}

impl From<&EstimationResult> for ResultJson {
    fn from(r: &EstimationResult) -> Self {
        Self {
            estimate: StateJson::from(&r.estimate),
            lambda: r.lambda,
            loglik: r.log_likelihood,
            iterations: r.iterations,
            residual: r.residual,
            converged: r.converged,
            floor_hits: r.floor_hits,
            phases_unidentified: r.phases_unidentified,
            n: r.n,
            m: r.m,
        }
    }
}

/// An estimate read back from a result file.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredResult {
    pub estimate: StateVector,
    pub n: u64,
    pub m: u64,
    pub phases_unidentified: bool,
}

pub fn read_result(path: &Path) -> Result<StoredResult, FormatError> {
    let json: ResultJson = parse_json(path)?;
    let estimate = json.estimate.to_state().map_err(|m| FormatError::file(path, m))?;
    Ok(StoredResult {
        estimate,
        n: json.n,
        m: json.m,
        phases_unidentified: json.phases_unidentified,
    })
}

/// A state file or the estimate inside a result file.
pub fn read_state_or_result(path: &Path) -> Result<StateVector, FormatError> {
    let text = read_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| FormatError::line(path, e.line(), e.to_string()))?;
    if value.get("estimate").is_some() {
        read_result(path).map(|r| r.estimate)
    } else {
        read_state(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderCandidateJson {
    pub s: usize,
    pub loglik: f64,
    pub parameters: usize,
    pub score: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderSelectionJson {
    pub chosen: usize,
    pub penalty: &'static str,
    pub status: &'static str,
    pub candidates: Vec<OrderCandidateJson>,
}

impl From<&OrderSelection> for OrderSelectionJson {
    fn from(sel: &OrderSelection) -> Self {
        Self {
            chosen: sel.chosen,
            penalty: "bic",
            status: "experimental",
            candidates: sel
                .candidates
                .iter()
                .map(|c| OrderCandidateJson {
                    s: c.size,
                    loglik: c.log_likelihood,
                    parameters: c.parameters,
                    score: c.score,
                    converged: c.converged,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReportJson {
    pub test: &'static str,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub reject_at: BTreeMap<String, bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<&'static str>,
}

impl TestReportJson {
    pub fn new(test: &'static str, report: &TestReport, alpha: f64) -> Self {
        Self {
            test,
            statistic: report.statistic,
            dof: report.dof,
            p_value: report.p_value,
            alpha,
            reject: report.rejected_at(alpha),
            reject_at: report.reject_at.iter().map(|&(a, r)| (a.to_string(), r)).collect(),
            note: report.note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeJson {
    pub axis: StateJson,
    pub half_angle: f64,
    pub alpha: f64,
    pub dof: usize,
    pub n_total: u64,
    pub degenerate: bool,
}

impl From<&ConfidenceCone> for ConeJson {
    fn from(c: &ConfidenceCone) -> Self {
        Self {
            axis: StateJson::from(&c.axis),
            half_angle: c.half_angle,
            alpha: c.alpha,
            dof: c.dof,
            n_total: c.n_total,
            degenerate: c.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EhrenfestJson {
    pub potential: &'static str,
    pub s: usize,
    pub mass: f64,
    pub frequencies: Vec<f64>,
    pub max_residual: f64,
    pub residual_matrix: Vec<Vec<f64>>,
    pub hamiltonian_deviation: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub hamiltonian_tolerance: f64,
}

impl EhrenfestJson {
    pub fn new(potential: &'static str, mass: f64, frequencies: Vec<f64>, report: &EhrenfestReport) -> Self {
        Self {
            potential,
            s: frequencies.len(),
            mass,
            frequencies,
            max_residual: report.max_residual,
            residual_matrix: report.residual_matrix.clone(),
            hamiltonian_deviation: report.hamiltonian_deviation,
            pass: report.pass,
            tolerance: report.tolerance,
            hamiltonian_tolerance: report.hamiltonian_tolerance,
        }
    }
}

/// CSV with a header row; the first column is the grid variable.
pub fn format_grid(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_grid(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), FormatError> {
    write_text(path, &format_grid(header, rows))
}

pub fn output_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("data.csv")
    }

    #[test]
    fn header_is_required() {
        let err = parse_sample(p(), "0.5\n1.0\n").unwrap_err();
        assert_eq!(
            err.to_string(),
            "data.csv:1: missing header `# space=coordinate|momentum scale=<a>`"
        );
        let err = parse_sample(p(), "# scale=1\n0.5\n").unwrap_err();
        assert_eq!(err.to_string(), "data.csv:1: missing space tag");
    }

    #[test]
    fn bad_values_name_their_line() {
        let err = parse_sample(p(), "# space=coordinate scale=1\n0.5\n\nabc\n").unwrap_err();
        assert_eq!(err.to_string(), "data.csv:4: not a number: \"abc\"");
        let err = parse_sample(p(), "# space=momentum\n0.5\nNaN\n").unwrap_err();
        assert_eq!(err.to_string(), "data.csv:3: non-finite value NaN");
        let err = parse_sample(p(), "# space=momentum\ninf\n").unwrap_err();
        assert!(err.to_string().starts_with("data.csv:2:"));
    }

    #[test]
    fn empty_data_section() {
        let err = parse_sample(p(), "# space=coordinate scale=1\n\n").unwrap_err();
        assert_eq!(err.to_string(), "data.csv: no observations");
    }

    #[test]
    fn negative_count_names_index() {
        let err = parse_counts(Path::new("c.json"), r#"{"direct":[1,2,-3],"conjugate":[0,0,0]}"#).unwrap_err();
        assert_eq!(err.to_string(), "c.json: direct[2] is negative (-3)");
        let err = parse_counts(Path::new("c.json"), r#"{"direct":[0,0],"conjugate":[0,0]}"#).unwrap_err();
        assert_eq!(err.to_string(), "c.json: no observations");
        assert!(parse_counts(Path::new("c.json"), r#"{"direct":[1],"conjugate":[0],"x":1}"#).is_err());
    }

    #[test]
    fn header_scale_is_parsed() {
        let f = parse_sample(p(), "# space=momentum scale=0.75\n1\n-2.5\n").unwrap();
        assert_eq!(f.scale, Some(0.75));
        assert_eq!(f.sample.space(), Space::Momentum);
        assert_eq!(f.sample.points(), &[1.0, -2.5]);
    }
}
