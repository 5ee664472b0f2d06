//! Job orchestration on top of `automl-core`: candidate generation, candidate
//! exploration, re-runs of edited definitions, prediction, offline portfolio
//! selection and benchmarking against a default-hyperparameter baseline.

pub mod bench;
pub mod config;
pub mod job;
pub mod portfolio;
pub mod predict;
pub mod report;
pub mod synth;

use thiserror::Error;

pub use bench::{relative_error_difference, run_bench, BenchManifest, BenchResult};
pub use config::{JobConfig, Mode};
pub use job::{analyze, fit_job, rerun, run_fit, run_generate, FitOutcome};
pub use report::{JobReport, JobStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JobError {
    /// Bad flags or configuration; exit code 1.
    #[error("usage: {0}")]
    Usage(String),
    /// Anything that went wrong while running a valid job; exit code 2.
    #[error("{0}")]
    Failed(String),
}

impl JobError {
    pub fn exit_code(&self) -> i32 {
        match self {
            JobError::Usage(_) => 1,
            JobError::Failed(_) => 2,
        }
    }
}

pub(crate) fn failed(e: impl std::fmt::Display) -> JobError {
    JobError::Failed(e.to_string())
}
