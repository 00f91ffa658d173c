use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample too small for normal approximation (n = {n}, need at least {min})")]
    SampleTooSmall { n: usize, min: usize },

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("mismatched series identity: {0}")]
    IdentityMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("MAPE undefined at zero (actual value at index {index} is 0)")]
    MapeUndefinedAtZero { index: usize },

    #[error("degenerate features: {0}")]
    DegenerateFeatures(String),

    #[error("no evaluable window: T = {total}, L + H = {needed}")]
    NoEvaluableWindow { total: f64, needed: f64 },

    #[error("covariates require continuous campaign")]
    CovariatesRequireContinuous,

    #[error("unknown device `{0}`")]
    UnknownDevice(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Wraps the error with a description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
