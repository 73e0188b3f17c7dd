use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("threshold must lie in (0, 1), got {0}")]
    ThresholdOutOfRange(f64),

    #[error("Lévy parameters provide no usable tail inverse")]
    MissingTailInverse,

    #[error("prefix length exceeded the hard cap of {cap} boxes (law/threshold mismatch?)")]
    PrefixCapExceeded { cap: usize },

    #[error("tail of this prefix cannot be expanded: {0}")]
    TailNotResumable(&'static str),

    #[error("missing law parameters for the limit theorem: {0}")]
    MissingParameters(String),

    #[error("no limit theorem applies to this law: {0}")]
    NoLimitTheorem(String),

    #[error("numeric range error: {0}")]
    Range(String),

    #[error("quadrature did not converge after {evals} evaluations (error estimate {error:e})")]
    QuadratureNonConvergence { evals: usize, error: f64 },

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("negative residual probability {0:e} during allocation")]
    NegativeResidual(f64),

    #[error("counting function is not exact for e^t = {exp_t:e} > n = {n}")]
    ExactnessLoss { exp_t: f64, n: u64 },

    #[error("error budget {budget:e} exceeds the cap {cap:e}")]
    ErrorBudgetExceeded { budget: f64, cap: f64 },

    #[error("limit spec does not match the law that produced the result: {0}")]
    SpecMismatch(String),

    #[error("normalization forms disagree: {0}")]
    NormalizationMismatch(String),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by numerics or law truncation rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Range(_)
                | Error::QuadratureNonConvergence { .. }
                | Error::NotPositiveSemidefinite { .. }
                | Error::NegativeResidual(_)
                | Error::ErrorBudgetExceeded { .. }
                | Error::PrefixCapExceeded { .. }
                | Error::NormalizationMismatch(_)
        )
    }
}
