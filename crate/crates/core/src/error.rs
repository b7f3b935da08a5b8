use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum DpError {
    /// A mechanism or helper received a parameter outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema error: {0}")]
    Schema(String),

    /// A raw record could not be coerced into the schema.
    #[error("record error in column `{column}`: {message}")]
    Record { column: String, message: String },

    #[error("query error: {0}")]
    Query(String),

    /// The analytic Gaussian root finder could not bracket the target.
    #[error(
        "calibration failed for eps={epsilon}, delta={delta}: {message} \
         (sigma_lo={sigma_lo:e}, sigma_hi={sigma_hi:e})"
    )]
    Calibration {
        epsilon: f64,
        delta: f64,
        sigma_lo: f64,
        sigma_hi: f64,
        message: String,
    },

    #[error("no valid outcome: every log-weight is -inf")]
    NoValidOutcome,

    #[error(
        "privacy budget exceeded: requested (eps={requested_epsilon}, delta={requested_delta}), \
         remaining (eps={remaining_epsilon}, delta={remaining_delta})"
    )]
    BudgetExceeded {
        requested_epsilon: f64,
        requested_delta: f64,
        remaining_epsilon: f64,
        remaining_delta: f64,
    },

    #[error("unknown release id {0}")]
    UnknownRelease(u64),

    #[error("ledger line {line}: {message}")]
    LedgerFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DpError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> DpError {
    DpError::InvalidParameter(msg.into())
}
