use thiserror::Error;

use crate::engine::config::ValidationReport;
use crate::engine::queue::ScheduleError;
use crate::reconfig::ReconfigError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Validation(#[from] ValidationReport),
    #[error("scenario {path}: {message}")]
    Scenario { path: String, message: String },
    #[error("simulation bug: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("reconfiguration failed: {0}")]
    Reconfig(#[from] ReconfigError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Validation-class errors: bad input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Scenario { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
