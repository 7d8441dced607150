use thiserror::Error;

use crate::variogram::{GlsIteration, SphericalFit};

pub type Result<T> = std::result::Result<T, OpdError>;

#[derive(Debug, Error)]
pub enum OpdError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("rank deficient design: {0}")]
    Rank(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// `exp` of the log-scale value would overflow `f64`.
    #[error("overflow: log-scale value {log_value} is not representable, use the log-scale result")]
    Overflow { log_value: f64 },

    /// The second-order correction factor of a delta-method approximation is not positive.
    #[error("delta-method approximation broke down (multiplicative factor {factor})")]
    ApproximationBreakdown { factor: f64 },

    #[error("root finding failed: {0}")]
    Solver(String),

    #[error("semivariogram fit did not converge after {iterations} iterations")]
    WlsNonConvergence {
        iterations: usize,
        last: Box<SphericalFit>,
    },

    #[error("estimation failed: {message}")]
    Estimation {
        message: String,
        trace: Vec<GlsIteration>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl OpdError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        OpdError::Domain(msg.into())
    }

    /// Configuration-type errors (bad input files, options) as opposed to
    /// numerical or estimation failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            OpdError::Config(_) | OpdError::Domain(_) | OpdError::Io(_) | OpdError::Csv(_)
        )
    }
}
