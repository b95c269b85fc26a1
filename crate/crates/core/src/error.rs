use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report. Variants are grouped by the process
/// exit code the CLI maps them to (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    // configuration / input errors
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("noise model {0} has no heavy-tail scaling")]
    UnsupportedKind(&'static str),
    #[error("batch of size {requested} exceeds the {available} available examples")]
    BatchTooLarge { requested: usize, available: usize },
    #[error("run produced no recorded steps")]
    EmptyHistogram,
    #[error("power-law fit needs at least 3 points, got {0}")]
    InsufficientPoints(usize),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    // assumption violations
    #[error("critical points do not interleave: {0}")]
    InterleavingViolation(String),
    #[error("degenerate critical point at x = {x} (f'' = {curvature:e})")]
    DegenerateCritical { x: f64, curvature: f64 },
    #[error("width/threshold ratio {ratio} of field {field} is an integer (clipping threshold b = {b})")]
    Assumption3Violation { field: usize, ratio: f64, b: f64 },
    #[error("field {0} has zero estimated exit rate")]
    ZeroExitRate(usize),

    // numerical failures
    #[error("gradient is not finite at x = {0}")]
    NonFiniteGradient(f64),
    #[error("gradient descent from {start:?} did not converge (|grad| = {grad_norm:e})")]
    NoConvergence { start: [f64; 2], grad_norm: f64 },
    #[error("flow integrator produced a non-finite state")]
    IntegratorFailure,
    #[error("absorption system is singular")]
    SingularSystem,
    #[error("every exit run was censored")]
    AllCensored,
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code: 2 config error, 3 assumption violation, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config(_) | Io { .. } | Json(_) | UnsupportedKind(_) | BatchTooLarge { .. }
            | EmptyHistogram | InsufficientPoints(_) | InsufficientSamples(_) => 2,
            InterleavingViolation(_)
            | DegenerateCritical { .. }
            | Assumption3Violation { .. }
            | ZeroExitRate(_) => 3,
            NonFiniteGradient(_)
            | NoConvergence { .. }
            | IntegratorFailure
            | SingularSystem
            | AllCensored => 4,
        }
    }
}
