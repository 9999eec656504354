use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("pair rate {pair_rate:e}/s is outside the low-gain regime for bandwidth {bandwidth:e} Hz (ratio {ratio:e} >= 1e-2)")]
    NotLowGain {
        pair_rate: f64,
        bandwidth: f64,
        ratio: f64,
    },

    #[error("tag stream is not time-sorted at index {index} ({previous} > {current})")]
    Unsorted {
        index: usize,
        previous: u64,
        current: u64,
    },

    #[error("tag budget exceeded: about {expected_tags} tags ({bytes} bytes) requested, limit is {limit} tags")]
    TagBudget {
        expected_tags: u64,
        bytes: u64,
        limit: u64,
    },

    #[error("stream duration is zero")]
    ZeroDuration,

    #[error("no heralding coincidences in the reference window")]
    NoHeralds,

    #[error("empty grid")]
    EmptyGrid,

    #[error("mode count {0} is not prime")]
    NotPrime(usize),

    #[error("operator list has odd length {0}")]
    OddOperatorList(usize),

    #[error("operator list is not normally ordered or has unbalanced daggers")]
    NotNormalOrdered,

    #[error("fit problem is not identifiable: degenerate direction {direction} (condition number {condition:e})")]
    NotIdentifiable { direction: String, condition: f64 },

    #[error("malformed tag file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
