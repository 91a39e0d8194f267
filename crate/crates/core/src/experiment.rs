//! Run orchestration shared by the CLI, the sweeps and the suites:
//! simulate, solve the optimum, audit.

use crate::audit::{build_report, theorem_parameters, AuditReport};
use crate::error::{AuditError, OptError};
use crate::exec::{self, Execution};
use crate::model::Scenario;
use crate::optimum::{solve_opt, OptimumSolution};
use crate::sim::{run, RunTrace};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub trace: RunTrace,
    /// `None` when the optimum is unbounded; see `opt_error`.
    pub opt: Option<OptimumSolution>,
    pub opt_error: Option<String>,
    pub report: AuditReport,
}

/// Simulates, solves the optimum and audits. An unbounded optimum is not an
/// error: the report then carries no ratio.
pub fn simulate_and_audit(scenario: &Scenario) -> Result<Outcome, AuditError> {
    let trace = run(scenario)?;
    let (opt, opt_error) = match solve_opt(scenario) {
        Ok(sol) => (Some(sol), None),
        Err(e @ OptError::Unbounded(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let report = build_report(&trace, opt.as_ref())?;
    Ok(Outcome {
        trace,
        opt,
        opt_error,
        report,
    })
}

/// The scenario re-parameterized for target `epsilon` (every connection
/// gets `β = beta_scale·ε`, `α = ε·β·val`) and stretched `duration` times.
pub fn sweep_variant(
    base: &Scenario,
    epsilon: f64,
    duration: u64,
    beta_scale: f64,
) -> Result<Scenario, AuditError> {
    let mut s = base.with_stretched_time(duration);
    s.epsilon = epsilon;
    for c in &mut s.connections {
        let (alpha, beta) = theorem_parameters(epsilon, c.value, beta_scale)?;
        c.alpha = alpha;
        c.beta = beta;
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub epsilons: Vec<f64>,
    pub durations: Vec<u64>,
    pub beta_scale: f64,
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub duration: u64,
    pub scenario: Scenario,
    pub outcome: Outcome,
}

/// Every `(ε, duration)` pair of the spec, in row-major order.
pub fn run_sweep(
    base: &Scenario,
    spec: &SweepSpec,
    exec: Execution,
) -> Result<Vec<SweepEntry>, AuditError> {
    let grid: Vec<(f64, u64)> = spec
        .epsilons
        .iter()
        .flat_map(|&e| spec.durations.iter().map(move |&d| (e, d)))
        .collect();
    exec::map(exec, &grid, |&(epsilon, duration)| {
        let scenario = sweep_variant(base, epsilon, duration, spec.beta_scale)?;
        let outcome = simulate_and_audit(&scenario)?;
        Ok(SweepEntry {
            epsilon,
            duration,
            scenario,
            outcome,
        })
    })
    .into_iter()
    .collect()
}

/// CSV `epsilon,duration,ratio,eps_hat`; an unbounded optimum leaves the
/// ratio empty.
pub fn sweep_summary_csv(entries: &[SweepEntry]) -> String {
    let mut out = String::from("epsilon,duration,ratio,eps_hat\n");
    for e in entries {
        let r = &e.outcome.report;
        let ratio = r
            .competitive_ratio
            .map(|x| x.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{ratio},{}\n",
            e.epsilon, e.duration, r.measured_epsilon_hat
        ));
    }
    out
}
