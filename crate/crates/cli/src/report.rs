use std::collections::BTreeMap;
use std::time::Instant;

use pfregen::birthdeath::BdError;
use pfregen::exact::SolveError;
use pfregen::kernel::KernelError;
use pfregen::mc::McError;
use pfregen::minorize::SplitSolveError;
use pfregen::MatrixError;
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// Exit status for a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Usage = 1,
    Model = 2,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<(usize, usize)>,
    #[serde(skip)]
    pub severity: Severity,
}

impl ErrorInfo {
    pub fn usage(kind: &'static str, message: impl Into<String>) -> Self {
        ErrorInfo {
            kind,
            message: message.into(),
            witness: None,
            severity: Severity::Usage,
        }
    }

    fn model(kind: &'static str, message: String) -> Self {
        ErrorInfo {
            kind,
            message,
            witness: None,
            severity: Severity::Model,
        }
    }
}

impl From<MatrixError> for ErrorInfo {
    fn from(e: MatrixError) -> Self {
        ErrorInfo::usage("invalid_matrix", e.to_string())
    }
}

impl From<SolveError> for ErrorInfo {
    fn from(e: SolveError) -> Self {
        let message = e.to_string();
        match e {
            SolveError::Reducible { witness } => ErrorInfo {
                witness: Some(witness),
                ..ErrorInfo::model("reducible", message)
            },
            SolveError::InvalidState { .. } => ErrorInfo::usage("invalid_state", message),
            SolveError::NoCrossing { .. } => ErrorInfo::model("no_root", message),
            SolveError::NoLowerBracket => ErrorInfo::model("no_lower_bracket", message),
            SolveError::NonPositiveEigenvector { .. } => {
                ErrorInfo::model("non_positive_eigenvector", message)
            }
            SolveError::Divergent { .. } => ErrorInfo::model("divergent", message),
        }
    }
}

impl From<McError> for ErrorInfo {
    fn from(e: McError) -> Self {
        let message = e.to_string();
        match e {
            McError::NoSurvivors { .. } => ErrorInfo::model("no_surviving_cycles", message),
            McError::NoRoot(_) => ErrorInfo::model("no_root", message),
            McError::Matrix(m) => m.into(),
            McError::InvalidState { .. } => ErrorInfo::usage("invalid_state", message),
            McError::Config(_) => ErrorInfo::usage("invalid_config", message),
        }
    }
}

impl From<KernelError> for ErrorInfo {
    fn from(e: KernelError) -> Self {
        let message = e.to_string();
        match e {
            KernelError::CoinOutOfRange { .. } => ErrorInfo::model("coin_out_of_range", message),
            KernelError::Mc(m) => m.into(),
            KernelError::Matrix(m) => m.into(),
            KernelError::Solve(s) => s.into(),
            KernelError::GridTooCoarse { .. } => ErrorInfo::usage("grid_too_coarse", message),
            KernelError::Config(_) => ErrorInfo::usage("invalid_config", message),
        }
    }
}

impl From<BdError> for ErrorInfo {
    fn from(e: BdError) -> Self {
        let message = e.to_string();
        match e {
            BdError::Solve(s) => s.into(),
            _ => ErrorInfo::usage("domain", message),
        }
    }
}

impl From<SplitSolveError> for ErrorInfo {
    fn from(e: SplitSolveError) -> Self {
        let message = e.to_string();
        match e {
            SplitSolveError::Mc(m) => m.into(),
            SplitSolveError::Split(_) => ErrorInfo::model("minorization_violated", message),
            SplitSolveError::NoRoot => ErrorInfo::model("no_root", message),
            SplitSolveError::Divergent { .. } => ErrorInfo::model("divergent", message),
        }
    }
}

/// Wall-clock phase timings in milliseconds.
#[derive(Debug, Default)]
pub struct Timings {
    phases: BTreeMap<&'static str, f64>,
}

impl Timings {
    pub fn time<T>(&mut self, phase: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.phases.entry(phase).or_default() += start.elapsed().as_secs_f64() * 1e3;
        out
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(&self.phases).expect("timings serialize")
    }
}

/// One JSON document per run.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: Value,
    pub result: Value,
    pub diagnostics: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

/// Serializes any report fragment.
pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report fragment serializes")
}
