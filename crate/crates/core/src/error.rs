use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("channel has {taps} taps but only {subcarriers} sub-carriers")]
    TooManyTaps { taps: usize, subcarriers: usize },

    #[error("binned AOD grid leaves [-1, 1]: largest |sine| is {max_sine}")]
    AodGridOutOfRange { max_sine: f64 },

    #[error("channel matrix is rank deficient{}: users {users:?}", fmt_subcarrier(*.subcarrier))]
    RankDeficient {
        subcarrier: Option<usize>,
        users: Vec<usize>,
    },

    #[error("value {value} outside the representable range [-2, 2] of a phase-shifter pair")]
    PhaseDomain { value: f64 },

    #[error("digital precoder stack is identically zero")]
    DegenerateStack,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn fmt_subcarrier(sc: Option<usize>) -> String {
    // Sub-carriers are reported 1-based.
    sc.map(|i| format!(" on sub-carrier {}", i + 1))
        .unwrap_or_default()
}

/// Configuration errors always name the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}
