use std::path::PathBuf;

use crate::domain::{JobId, Slot, Violation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid cloud spec: {0}")]
    InvalidSpec(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum BdlError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{}", join_violations(.0))]
    Semantic(Vec<Violation>),
    #[error("unsupported operator {0:?}: only AND lists are accepted")]
    UnsupportedOperator(String),
    #[error("invalid time value {0:?}")]
    BadTime(String),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error("line {line}: duplicate job id {job}")]
    DuplicateJob { line: u64, job: JobId },
    #[error("line {line}: {}", join_violations(violations))]
    InvalidRow { line: u64, violations: Vec<Violation> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictorError {
    #[error("slot {slot} outside the prediction range [{now}, {horizon})")]
    OutOfHorizon { now: Slot, slot: Slot, horizon: Slot },
    #[error("unknown resource index {0}")]
    UnknownResource(usize),
    #[error(
        "LP solver did not converge after {iterations} pivots \
         (primal residual {primal_residual:.3e}, duality gap {duality_gap:.3e})"
    )]
    NotConverged { iterations: usize, primal_residual: f64, duality_gap: f64 },
    #[error("invalid demand curve: {0}")]
    InvalidCurve(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("invalid request {job}: {}", join_violations(violations))]
    InvalidRequest { job: JobId, violations: Vec<Violation> },
    #[error("job {0} already has a reservation")]
    DuplicateJob(JobId),
    #[error("feedback references unknown job {0}")]
    UnknownJob(JobId),
    #[error("capacity change for slot {slot} is not in the future of slot {now}")]
    PastCapacityChange { now: Slot, slot: Slot },
    #[error("feedback references unknown resource {0:?}")]
    UnknownResource(String),
    #[error("request arrives at slot {arrival} but the engine is at slot {now}")]
    ArrivalInPast { now: Slot, arrival: Slot },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("class {class}: {message}")]
    InvalidClass { class: String, message: String },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("instance too large for exhaustive search: {jobs} jobs, {slots} slots (limit {max_jobs} jobs, {max_slots} slots)")]
    InstanceTooLarge { jobs: usize, slots: Slot, max_jobs: usize, max_slots: Slot },
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Bdl(#[from] BdlError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}
