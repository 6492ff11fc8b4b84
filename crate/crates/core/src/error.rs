use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside its domain ({domain})")]
    InputDomain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("node {0} is not an active member of the multicast group")]
    Membership(u32),

    /// Feedback airtime alone would fill the reporting interval.
    #[error("reporting interval {interval}s is infeasible: {reports} reports of {report_duration}s need at least that long")]
    InfeasibleInterval {
        interval: f64,
        reports: u32,
        report_duration: f64,
    },

    #[error("video plan is infeasible: {0}")]
    InfeasiblePlan(&'static str),

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("failed to parse {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
