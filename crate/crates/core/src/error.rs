use std::path::PathBuf;

use thiserror::Error;

/// Every failure mode of the library, grouped by the stage that raises it.
#[derive(Debug, Error)]
pub enum Error {
    // --- problem construction and assumption checks ---
    #[error("unknown function kind `{0}`")]
    UnknownKind(String),

    #[error("invalid constant `{name}` = {value}: {reason}")]
    InvalidConstant {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("function evaluation failed at {point:?}: {reason}")]
    EvaluationFailure { point: Vec<f64>, reason: String },

    #[error("sigma sigma' is not symmetric (asymmetry {0:e})")]
    NonSymmetricProduct(f64),

    #[error("reference measure requires a one-dimensional problem, got dim = {0}")]
    NotOneDimensional(usize),

    #[error("reference measure requires a constant scalar diffusion")]
    NonConstantSigma,

    #[error("reference density leaks mass at the truncation boundary (tail/max = {0:e})")]
    MassLeak(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    // --- corrector ---
    #[error("PDE solve supports dim 1 or 2, got {0}")]
    UnsupportedDimension(usize),

    #[error("assembled operator lost monotonicity at row {row} (diagonal {diagonal:e}); refine the grid")]
    SingularAssembly { row: usize, diagonal: f64 },

    #[error("linear solve failed: relative residual {residual:e} after {iterations} iterations")]
    LinearSolveFailure { residual: f64, iterations: usize },

    #[error("non-finite value detected in {0}")]
    NaNDetected(&'static str),

    #[error("lambda search exhausted after {doublings} doublings (last lambda {lambda}, sup|grad u| = {sup_grad_u})")]
    LambdaSearchExhausted {
        doublings: usize,
        lambda: f64,
        sup_grad_u: f64,
    },

    #[error("inverse transform did not converge within {iterations} iterations at {point:?}")]
    NoConvergence { iterations: usize, point: Vec<f64> },

    // --- sampler ---
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: u64 },

    #[error("excursion guard tripped at step {step}: |Z| = {norm} > {limit}")]
    ExcursionGuard { step: u64, norm: f64, limit: f64 },

    #[error("naive Euler-Maruyama is refused for Case 1 drifts (b is only defined almost everywhere)")]
    Case1Unsupported,

    #[error("chain {index}: {source}")]
    Chain {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    // --- metrics and fitting ---
    #[error("empty sample set")]
    EmptySampleSet,

    #[error("rate fit needs at least {needed} usable points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("degenerate fit: all step sizes are equal")]
    DegenerateFit,

    // --- harness ---
    #[error("stage `{stage}`{}: {source}", eta.map(|e| format!(" (eta = {e})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        eta: Option<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidConstant {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_stage(self, stage: &'static str, eta: Option<f64>) -> Self {
        Error::Stage {
            stage,
            eta,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input rather than a numerical failure.
    /// The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::UnknownKind(_)
            | Error::InvalidConstant { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::NotOneDimensional(_)
            | Error::NonConstantSigma
            | Error::UnsupportedDimension(_)
            | Error::Case1Unsupported => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
