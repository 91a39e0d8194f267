use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}, column {column}, field `{field}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("invalid scenario:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("resource '{resource}' is not on the route of connection '{connection}'")]
    NotOnRoute {
        connection: String,
        resource: String,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("round {round} is outside the warm-up window {first}..={last}")]
    OutsideWarmup { round: u64, first: u64, last: u64 },
    #[error("round {round} is outside the update window {first}..={last}")]
    OutsideUpdate { round: u64, first: u64, last: u64 },
    #[error("no sent entry for round {0}")]
    MissingSent(u64),
    #[error("no loss feedback for round {0}")]
    MissingFeedback(u64),
    #[error("loss ratio {0} is outside [0,1]")]
    LossRatioOutOfRange(f64),
    #[error("received {rcvd} exceeds sent {sent} for the cohort arriving in round {round}")]
    ReceivedExceedsSent { round: u64, rcvd: f64, sent: f64 },
    #[error("received amount {0} is negative")]
    NegativeReceived(f64),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("negative contribution {0} at a resource")]
    NegativeContribution(f64),
    #[error("conservation breach: {0}")]
    Conservation(String),
}

#[derive(Debug, Error)]
pub enum OptError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unbounded: connection '{0}' has positive value and no finite capacity on its route")]
    Unbounded(String),
    #[error("brute force supports at most {max} paths, scenario has {got}")]
    TooManyPaths { max: usize, got: usize },
    #[error("grid resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("simplex did not reach the optimality tolerance (gap {0:e})")]
    NotConverged(f64),
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("optimum is zero but the run delivered weighted throughput {0}")]
    ZeroOptimum(f64),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("scenario has heterogeneous active intervals")]
    HeterogeneousIntervals,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Opt(#[from] OptError),
}
