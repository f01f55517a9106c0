use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    /// `index` is the 1-based position of the offending entry, when there is one.
    #[error("validation error{}: {message}", .index.map(|i| format!(" (entry {i})")).unwrap_or_default())]
    Validation {
        index: Option<usize>,
        message: String,
    },

    #[error("voltage {0} V is not in the V-F table")]
    UnknownVoltage(f64),

    #[error("missing profile for kind `{kind}` on PE `{pe}`: {detail}")]
    MissingProfile {
        pe: String,
        kind: String,
        detail: String,
    },

    #[error("kernel {kernel_id} cannot be tiled on PE `{pe}`: {reason}")]
    Untileable {
        kernel_id: usize,
        pe: String,
        reason: String,
    },

    #[error("kernel {kernel_id} has no feasible tiling mode on PE `{pe}`")]
    NoFeasibleMode { kernel_id: usize, pe: String },

    #[error("kernel {kernel_id} has no valid configuration on any PE")]
    NoValidConfiguration { kernel_id: usize },

    #[error("deadline {deadline} s cannot be met; minimum achievable active time is {min_achievable_time} s")]
    InfeasibleDeadline {
        deadline: f64,
        min_achievable_time: f64,
    },

    #[error("power decoupling needs two distinct frequencies (got {0} Hz twice)")]
    DegenerateMeasurement(f64),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("unknown reference: {0}")]
    UnknownReference(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn validation(index: Option<usize>, message: impl Into<String>) -> Self {
        Error::Validation {
            index,
            message: message.into(),
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}
