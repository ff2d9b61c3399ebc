//! Experiment harness: configuration, run orchestration, run directories,
//! reports and the self-test suite behind the `bubblelab` CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod record;
pub mod report;
pub mod run;
pub mod selftest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("run diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("resolution stop at t = {t} before any fit window")]
    ResolutionStop { t: f64 },

    #[error("no usable rate-fit window: {0}")]
    NoFitWindow(String),

    #[error("report: {0}")]
    Report(String),

    #[error(transparent)]
    Core(#[from] bubblelab::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 validation, 3 divergence, 4 resolution stop
    /// before any fit window, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation { .. } | HarnessError::Parse(_) => 2,
            HarnessError::Diverged { .. } => 3,
            HarnessError::ResolutionStop { .. } | HarnessError::NoFitWindow(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
