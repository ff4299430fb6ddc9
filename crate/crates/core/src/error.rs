use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polynomial degree {0} (supported: 1..=15)")]
    InvalidDegree(usize),

    #[error("inconsistent quadrature rule: weights sum to {sum} instead of 2")]
    InconsistentRule { sum: f64 },

    #[error("degenerate Lagrange basis: nodes {0} and {1} coincide")]
    DegenerateBasis(usize, usize),

    #[error("operator construction failed: max |S_ij + S_ji| = {asymmetry:e}")]
    OperatorConstruction { asymmetry: f64 },

    #[error("unphysical state: rho = {rho}, p = {p}")]
    UnphysicalState { rho: f64, p: f64 },

    #[error("entropy inversion failed: last entropy variable {last} must be negative")]
    EntropyInversion { last: f64 },

    #[error("logarithmic mean of non-positive arguments ({0}, {1})")]
    LogMeanDomain(f64, f64),

    #[error("degenerate bar state: zero wave speed with non-zero flux jump")]
    DegenerateBarState,

    #[error("telescoping closure violated: relative residual {residual:e}")]
    TelescopingClosure { residual: f64 },

    #[error("subcell normal recurrence does not close: residual {residual:e}")]
    MetricInconsistency { residual: f64 },

    #[error("invalid warp: minimum Jacobian {min_jacobian}")]
    InvalidWarp { min_jacobian: f64 },

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("degenerate state: time step {0} is not positive")]
    DegenerateTimeStep(f64),

    #[error("element {element}, line {line}: {source}")]
    InElement {
        element: usize,
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("step failed at stage {stage}: {source}")]
    StepFailure {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn in_element(self, element: usize, line: usize) -> Self {
        match self {
            e @ Error::InElement { .. } => e,
            e => Error::InElement {
                element,
                line,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the numerical state rather than by setup.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::UnphysicalState { .. }
            | Error::EntropyInversion { .. }
            | Error::LogMeanDomain(..)
            | Error::DegenerateBarState
            | Error::TelescopingClosure { .. }
            | Error::DegenerateTimeStep(_)
            | Error::StepFailure { .. } => true,
            Error::InElement { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
