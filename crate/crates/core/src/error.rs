use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("wavelength {value_um} µm is outside the valid range: {bound} bound is {limit_um} µm")]
    WavelengthOutOfRange {
        value_um: f64,
        bound: &'static str,
        limit_um: f64,
    },

    #[error("no phase-matched emission at {lambda_nm} nm for external angles in [{lo_deg}°, {hi_deg}°]")]
    NoPhaseMatch {
        lambda_nm: f64,
        lo_deg: f64,
        hi_deg: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0} stream is not sorted by time")]
    Unsorted(&'static str),

    #[error("undefined reference: {0}")]
    UndefinedReference(&'static str),

    #[error("undefined g2 normalization: {0}")]
    UndefinedNormalization(&'static str),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("inconsistent counts: {0}")]
    Inconsistent(String),

    #[error("correction drives {term} negative ({value})")]
    NegativeCorrection { term: &'static str, value: f64 },

    #[error("transmittance {value}% is outside the attainable interval ({lo}%, {hi}%]")]
    OutOfAttainableRange { value: f64, lo: f64, hi: f64 },

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("fit did not converge after {iterations} iterations (rss {rss})")]
    NotConverged { iterations: usize, rss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for validation problems, 3 for numeric or convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::NoPhaseMatch { .. }
            | Error::IllConditioned(_)
            | Error::Numeric(_)
            | Error::NotConverged { .. } => 3,
            _ => 2,
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg()))
    }
}
