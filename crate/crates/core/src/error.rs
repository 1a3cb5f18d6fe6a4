use thiserror::Error;

use crate::time::SimTime;

/// Faults inside the simulation engine itself. These indicate a programming
/// error and abort the run.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("event scheduled at {fire_at} but the clock is already at {now}")]
    ScheduleInPast { now: SimTime, fire_at: SimTime },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("invalid {what}: `{value}`")]
    Field { what: &'static str, value: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<TraceError>,
    },
    #[error("line {line}: expected 6 tab-separated fields, found {found}")]
    Arity { line: usize, found: usize },
    #[error("line {line}: time goes backwards")]
    NonMonotonic { line: usize },
    #[error("unknown client `{0}` in trace")]
    UnknownClient(String),
}

impl TraceError {
    pub(crate) fn field(what: &'static str, value: &str) -> Self {
        TraceError::Field {
            what,
            value: value.to_string(),
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Self {
        TraceError::Line {
            line,
            source: Box::new(self),
        }
    }
}

/// Scenario document problems. Each variant names the offending key.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("duplicate key `{key}`")]
    DuplicateKey { key: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("`{key}` = `{value}` is not a valid {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("`{key}` must be a probability in [0,1], got `{value}`")]
    ProbabilityRange { key: String, value: String },
    #[error("`{key}` must be a positive duration, got `{value}`")]
    NonPositiveDuration { key: String, value: String },
    #[error("`{key}` violates constraint: {constraint}")]
    Constraint { key: String, constraint: String },
    #[error("unknown preset scenario `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("scenario needs more than {budget} probabilistic branches; shrink it")]
    BranchBudgetExceeded { budget: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CartographyError {
    #[error("axis `{0}` does not name a scenario parameter")]
    UnknownAxis(String),
    #[error("axis `{0}` has no values")]
    EmptyAxis(String),
    #[error("axis `{0}` given twice")]
    DuplicateAxis(String),
    #[error("no-dead-transitions is judged over a batch, not per run")]
    BatchProperty,
    #[error("runs per point must be at least 1")]
    NoRuns,
    #[error("deadline axis requires a deadline-style property")]
    DeadlineAxisWithoutDeadline,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
