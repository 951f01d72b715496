use thiserror::Error;

/// Errors raised by table construction, sampling and verification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyData,

    #[error("value {value} lies outside the output range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("maximum distance must be at least {min}, got {got}")]
    DistanceTooSmall { min: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid envelope table: {0}")]
    InvalidTable(String),

    #[error("every interval of the table has zero width")]
    AllWidthsZero,

    #[error("enumeration needs {needed} evaluations, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("tables have different output ranges: [{a_lo}, {a_hi}] vs [{b_lo}, {b_hi}]")]
    RangeMismatch {
        a_lo: f64,
        a_hi: f64,
        b_lo: f64,
        b_hi: f64,
    },

    #[error("invalid radius schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}
