use alloc::string::String;

/// Errors produced by the estimation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("index {index} out of range for basis of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("state is not normalized (norm² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("singular chart: c0² = {c0_sqr} is below 1e-12")]
    SingularChart { c0_sqr: f64 },
    #[error("density is exactly zero at {space} observation {index}")]
    ZeroDensity { space: &'static str, index: usize },
    #[error("{total} observations cannot identify {size} coefficients")]
    TooFewObservations { total: u64, size: usize },
    #[error("no observations")]
    NoObservations,
    #[error("{0}")]
    Numerical(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
