use thiserror::Error;

/// A single violated constraint found while validating raw system data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("map {index}: operator norm {norm} is not < 1")]
    NonContractive { index: usize, norm: f64 },
    #[error("map {index}: weight {weight} is not in (0, 1)")]
    WeightOutOfRange { index: usize, weight: f64 },
    #[error("weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("map {index}: matrix is singular (|det| = {det})")]
    Singular { index: usize, det: f64 },
    #[error("map {index}: {what} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("map {index}: non-finite entry")]
    NonFinite { index: usize },
    #[error("dimension {0} is not supported (need d >= 2)")]
    BadDimension(usize),
    #[error("system has no maps")]
    Empty,
}

impl Violation {
    /// Coarse category of the violation.
    pub fn kind(&self) -> ViolationKind {
        match self {
            Violation::NonContractive { .. } => ViolationKind::NonContractive,
            Violation::WeightOutOfRange { .. } | Violation::WeightSum { .. } => {
                ViolationKind::BadWeights
            }
            Violation::Singular { .. } => ViolationKind::Singular,
            Violation::DimensionMismatch { .. }
            | Violation::BadDimension(_)
            | Violation::Empty
            | Violation::NonFinite { .. } => ViolationKind::DimensionMismatch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonContractive,
    BadWeights,
    Singular,
    DimensionMismatch,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("letter {letter} out of range for a system with {n_maps} maps")]
    IndexOutOfRange { letter: usize, n_maps: usize },
    #[error("budget exceeded: {what} needed more than {cap} nodes")]
    BudgetExceeded { what: &'static str, cap: usize },
    #[error("sample pool is empty")]
    EmptyPool,
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("matrix is singular")]
    Singular,
    #[error("stopping time exceeded the step cap {cap}")]
    StepCapExceeded { cap: usize },
    #[error("Lyapunov estimate {estimate} (half-width {half_width}) is not negative")]
    NonNegativeLyapunov { estimate: f64, half_width: f64 },
    #[error("cone detection inconclusive after {iterations} iterations (angular width {width})")]
    Inconclusive { iterations: usize, width: f64 },
    #[error("operation requires d = 2, got d = {0}")]
    DimensionNot2(usize),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("power iteration did not converge after {iterations} iterations (ratio spread {spread})")]
    NoConvergence { iterations: usize, spread: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
