//! Crate-wide error type and result alias.

use thiserror::Error;

/// All failure modes surfaced by the library and the CLI.
#[derive(Debug, Error)]
pub enum CptError {
    /// A schedule spec violates its invariants.
    #[error("invalid schedule spec: {0}")]
    InvalidSpec(String),
    /// A step index outside the schedule's budget.
    #[error("step {n} outside schedule budget [0, {n_total}]")]
    StepOutOfRange { n: u64, n_total: u64 },
    /// Timeline composition rejected the task plans.
    #[error("invalid task plan: {0}")]
    InvalidPlan(String),
    /// A replay composition policy cannot be satisfied.
    #[error("replay policy error: {0}")]
    Policy(String),
    /// Shape or value mismatch in model-side inputs.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Non-finite loss or gradient; the step was aborted.
    #[error("divergence at global step {global_step}: non-finite loss or gradient")]
    Divergence { global_step: u64 },
    /// Config file failed validation; `field` names the offending key.
    #[error("config error at `{field}`: {msg}")]
    Config { field: String, msg: String },
    /// A persisted artifact could not be parsed back.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CptError {
    /// Config-shaped convenience constructor.
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        CptError::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 0 success, 2 config/input error, 3 divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CptError::InvalidSpec(_)
            | CptError::StepOutOfRange { .. }
            | CptError::InvalidPlan(_)
            | CptError::Policy(_)
            | CptError::InvalidInput(_)
            | CptError::Config { .. }
            | CptError::Parse(_) => 2,
            CptError::Divergence { .. } => 3,
            CptError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CptError>;
