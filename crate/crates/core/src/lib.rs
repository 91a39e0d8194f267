//! Fluid-model network simulator for the Linear MIMD congestion-control
//! protocol, with a static-optimum LP solver and a run auditor.
//!
//! * [`model`]: scenarios, validation, delay bookkeeping.
//! * [`protocol`]: the per-connection rate rule.
//! * [`loss`]: how congested resources split their excess.
//! * [`sim`]: the round-by-round kernel and its trace.
//! * [`optimum`]: best fixed-rate assignment (LP) and a grid oracle.
//! * [`audit`]: inequality slacks, fairness, constants, competitive ratio.
//! * [`bandwidth`], [`experiment`], [`cli`]: orchestration and I/O.

pub mod audit;
pub mod bandwidth;
pub mod cli;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod loss;
pub mod model;
pub mod num;
pub mod optimum;
pub mod protocol;
pub mod random;
pub mod sim;
pub mod simplex;

pub use audit::{
    build_report, competitive_ratio, measure_fairness, theorem_parameters, AuditReport,
};
pub use error::{AuditError, ModelError, OptError, ProtocolError, SimError};
pub use exec::Execution;
pub use model::{validate, Capacity, ConnectionSpec, LossPolicy, ResourceSpec, Scenario};
pub use optimum::{brute_force_opt, solve_opt, OptimumSolution};
pub use sim::{run, RunTrace};
