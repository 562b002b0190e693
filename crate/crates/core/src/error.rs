use std::path::PathBuf;

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::cohort::CohortError;
use crate::explain::ExplainError;
use crate::metrics::MetricsError;
use crate::report::ReportError;
use crate::stats::StatsError;
use crate::synth::SynthError;
use crate::trials::TrialsError;

/// Crate-level error. Messages are prefixed with the module that raised them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cohort: {0}")]
    Cohort(#[from] CohortError),
    #[error("trials: {0}")]
    Trials(#[from] TrialsError),
    #[error("calibration: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("explain: {0}")]
    Explain(#[from] ExplainError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("report: {0}")]
    Report(#[from] ReportError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical kernels (rank deficiency and the like)
    /// as opposed to bad input data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Stats(e) => e.is_numerical(),
            Error::Explain(ExplainError::Stats(e)) => e.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
