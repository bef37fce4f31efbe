use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Fock truncation {dim}: every mode needs at least 2 levels")]
    InvalidDimension { dim: usize },

    #[error(
        "truncation guard: |alpha|^2 = {alpha_sq:.4} exceeds dim/4 for dim = {dim}; \
         use a truncation of at least {required_dim} levels"
    )]
    TruncationGuard {
        alpha_sq: f64,
        dim: usize,
        required_dim: usize,
    },

    #[error("Hilbert space mismatch: {left:?} vs {right:?}")]
    SpecMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("division guard: {0}")]
    DivisionGuard(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error(
        "step size underflow at t = {t} us (h = {step:e}); the problem is too stiff for the \
         explicit integrator, reduce the truncation or resolve the drive envelopes more finely"
    )]
    Stiffness { t: f64, step: f64 },

    #[error("dense oracle limited to total dimension {max}, got {dim}")]
    DimensionGuard { dim: usize, max: usize },

    #[error("operation requires a time-independent model")]
    TimeDependentModel,

    #[error("steady-state search did not converge: {0}")]
    NonConvergence(String),

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("leakage undefined: both Wigner samples are non-positive ({w_plus}, {w_minus})")]
    UndefinedLeakage { w_plus: f64, w_minus: f64 },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown config key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        key: String,
        suggestion: Option<String>,
    },

    #[error("config key `{key}` is missing its unit suffix; write it as `{expected}`")]
    MissingUnit { key: String, expected: String },

    #[error("invalid config value for `{key}`: {message}")]
    ConfigValue { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::ConfigParse { .. }
                | Error::UnknownKey { .. }
                | Error::MissingUnit { .. }
                | Error::ConfigValue { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
