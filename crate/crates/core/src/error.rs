use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model evaluation produced a non-finite value in {component} at u={u:?}, v={v:?}")]
    ModelEval {
        component: String,
        u: Vec<f64>,
        v: Vec<f64>,
    },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("linear solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("step failure at t={t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("layer potential calibration: {0}")]
    Calibration(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for manifests.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Mesh(_) => "mesh",
            Error::Config(_) => "config",
            Error::ModelEval { .. } => "model_eval",
            Error::Expr(_) => "expression",
            Error::SolverDivergence { .. } => "solver_divergence",
            Error::StepFailure { .. } => "step_failure",
            Error::Domain(_) => "domain",
            Error::Calibration(_) => "calibration",
            Error::Quadrature(_) => "quadrature",
            Error::Precondition(_) => "precondition",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
