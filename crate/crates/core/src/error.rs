use crate::expr::{EvalError, ParseError, SymbolError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{context}: {source}")]
    Parse { context: String, source: ParseError },
    #[error(transparent)]
    Symbols(#[from] SymbolError),
    #[error("model file line {line}: {message}")]
    ModelFile { line: usize, message: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),

    #[error("Hessian rank is not constant across samples: {ranks:?}")]
    RankNotConstant { ranks: Vec<usize> },
    #[error("regular minor is singular at sample {sample} (smallest singular value {smallest_singular_value:e})")]
    SplitUnstable { sample: usize, smallest_singular_value: f64 },
    #[error("model is singular (rank {rank} < n = {n})")]
    ModelSingular { rank: usize, n: usize },
    #[error("h_alpha or H0 depends on the degenerate velocities (spread {spread:e})")]
    DependenceOnVelocity { spread: f64 },

    #[error("Newton resolution of regular velocities did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("regular Hessian minor is singular at the Newton iterate")]
    SingularJacobian,

    #[error("degenerate velocity equation F v = D H0 is inconsistent (residual {residual:e} at t = {t})")]
    InconsistentSystem { residual: f64, t: f64 },
    #[error("F has a {kernel_dim}-dimensional kernel but no gauge choice was supplied")]
    MissingGauge { kernel_dim: usize },
    #[error("F is not invertible (rank {rank} of {size})")]
    FNotInvertible { rank: usize, size: usize },

    #[error("time series has {have} samples, at least {need} are required")]
    TooFewSamples { have: usize, need: usize },
    #[error("supremum of p v - L is attained on the grid boundary (v = {at}); model is not coercive")]
    SupremumOnBoundary { at: f64 },
    #[error("convention calibration is ambiguous: A passes = {a_passes}, B passes = {b_passes}")]
    CalibrationAmbiguous { a_passes: bool, b_passes: bool },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Symbols(_)
            | Error::ModelFile { .. }
            | Error::Dimension(_)
            | Error::InvalidArgument(_) => 1,
            Error::RankNotConstant { .. }
            | Error::SplitUnstable { .. }
            | Error::ModelSingular { .. }
            | Error::DependenceOnVelocity { .. } => 2,
            Error::Eval(_) | Error::NoConvergence { .. } | Error::SingularJacobian => 3,
            Error::InconsistentSystem { .. } | Error::MissingGauge { .. } | Error::FNotInvertible { .. } => 4,
            Error::TooFewSamples { .. }
            | Error::SupremumOnBoundary { .. }
            | Error::CalibrationAmbiguous { .. }
            | Error::Verification(_) => 5,
        }
    }

    /// Variant name, used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "Parse",
            Error::Symbols(_) => "Symbols",
            Error::ModelFile { .. } => "ModelFile",
            Error::Dimension(_) => "Dimension",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Eval(_) => "Eval",
            Error::RankNotConstant { .. } => "RankNotConstant",
            Error::SplitUnstable { .. } => "SplitUnstable",
            Error::ModelSingular { .. } => "ModelSingular",
            Error::DependenceOnVelocity { .. } => "DependenceOnVelocity",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SingularJacobian => "SingularJacobian",
            Error::InconsistentSystem { .. } => "InconsistentSystem",
            Error::MissingGauge { .. } => "MissingGauge",
            Error::FNotInvertible { .. } => "FNotInvertible",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::SupremumOnBoundary { .. } => "SupremumOnBoundary",
            Error::CalibrationAmbiguous { .. } => "CalibrationAmbiguous",
            Error::Verification(_) => "Verification",
        }
    }
}
