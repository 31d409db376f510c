use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("detector latched: bias {bias_ua} uA is not below critical current {critical_ua} uA")]
    Latched { bias_ua: f64, critical_ua: f64 },

    #[error("arrival times are not sorted (index {index})")]
    UnsortedArrivals { index: usize },

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("negative efficiency: count rate {count_rate} is below dark rate {dark_rate}")]
    NegativeEfficiency { count_rate: f64, dark_rate: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("no resonance dip found above the noise floor")]
    NoDip,

    #[error("half-wave voltage not identifiable: {0}")]
    Unidentifiable(String),

    #[error("empty histogram")]
    EmptyHistogram,

    #[error("envelope peak outside the sampled range")]
    PeakOutOfRange,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
