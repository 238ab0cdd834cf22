use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("missing group: {0}")]
    MissingGroup(String),

    #[error("degenerate crack front: {0}")]
    DegenerateFront(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid material parameters: {0}")]
    InvalidMaterial(String),

    #[error("point outside the reference element: {0:?}")]
    OutsideReference([f64; 3]),

    #[error("non-positive Jacobian determinant {det:e} in element {element}")]
    NegativeJacobian { element: usize, det: f64 },

    #[error("unsupported quadrature degree {0}")]
    UnsupportedDegree(usize),

    #[error("approximation order exceeds cap: {requested} > {cap}")]
    OrderCap { requested: usize, cap: usize },

    #[error("singular moment matrix: {0}")]
    SingularMoment(String),

    #[error("insufficient MWLS support at {point:?}: {neighbours} neighbours")]
    InsufficientSupport { point: [f64; 3], neighbours: usize },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("Newton iteration diverged after {iterations} iterations (|r| = {residual:e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (|r| = {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("time step underflow at t = {t}: dt = {dt} < dt_min = {dt_min}")]
    StepUnderflow { t: f64, dt: f64, dt_min: f64 },

    #[error("inadmissible state: {0}")]
    Inadmissible(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 numerical failure, 2 input error, 3 topology/group error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidInput(_)
            | Error::InvalidMaterial(_)
            | Error::UnsupportedDegree(_)
            | Error::OrderCap { .. } => 2,
            Error::Topology(_) | Error::MissingGroup(_) | Error::DegenerateFront(_) => 3,
            _ => 1,
        }
    }
}
