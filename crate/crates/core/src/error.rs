use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("all observations are censored (column `{column}` has no events)")]
    AllCensored { column: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid label {0}; expected -1 or +1")]
    InvalidLabel(f64),

    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    FactorizationFailure { pivot: usize },

    #[error("lambda ladder exhausted after {0} doublings")]
    LadderExhausted(usize),

    #[error("linear solve residual {residual:e} exceeds bound {bound:e}")]
    InaccurateSolve { residual: f64, bound: f64 },

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("setup {setup} needs at least {required} features, got {got}")]
    InsufficientFeatures {
        setup: &'static str,
        required: usize,
        got: usize,
    },

    #[error("censoring rate {0} cannot be attained")]
    CensoringUnattainable(f64),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::ZeroVariance(_)
                | Error::FactorizationFailure { .. }
                | Error::LadderExhausted(_)
                | Error::InaccurateSolve { .. }
                | Error::NoComparablePairs
                | Error::CensoringUnattainable(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
