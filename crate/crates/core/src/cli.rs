//! Command-line front end. Every output is produced by a library call; this
//! module only reads the scenario, picks the mode and writes files.
//!
//! Exit codes: 0 success, 2 parse or validation error, 3 runtime error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::bandwidth::bandwidth_test;
use crate::error::{AuditError, ModelError, OptError, SimError};
use crate::exec::Execution;
use crate::experiment::{run_sweep, simulate_and_audit, sweep_summary_csv, Outcome, SweepSpec};
use crate::model::{ensure_valid, LossPolicy, Scenario};
use crate::optimum::solve_opt;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Simulate,
    Bwtest,
    Audit,
    Opt,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "mimd",
    about = "Linear MIMD fluid simulator, optimum solver and auditor"
)]
pub struct RunConfig {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "simulate")]
    pub mode: Mode,
    /// Overrides the adversarial loss policy seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated ε values to sweep (re-derives α and β per connection).
    #[arg(long, value_delimiter = ',')]
    pub sweep_epsilon: Vec<f64>,
    /// Comma-separated integer duration multipliers to sweep.
    #[arg(long, value_delimiter = ',')]
    pub sweep_duration: Vec<u64>,
    /// β = beta_scale·ε in sweeps.
    #[arg(long, default_value_t = 1.0)]
    pub beta_scale: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NotOnRoute { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::Sim(SimError::Model(m)) | AuditError::Opt(OptError::Model(m)) => m.into(),
            AuditError::HeterogeneousIntervals | AuditError::Parameter(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Reads and validates a scenario, applying the seed override.
pub fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut scenario = Scenario::from_json(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if let (Some(s), LossPolicy::AdversarialFair { seed, .. }) = (seed, &mut scenario.loss_policy) {
        *seed = s;
    }
    ensure_valid(&scenario)?;
    Ok(scenario)
}

/// Writes `trace/`, `report.json` and (when bounded) `opt.json` under `dir`.
pub fn write_outcome(dir: &Path, outcome: &Outcome, with_trace: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    if with_trace {
        outcome.trace.write_csv(&dir.join("trace"))?;
    }
    fs::write(dir.join("report.json"), outcome.report.to_json())?;
    if let Some(opt) = &outcome.opt {
        fs::write(dir.join("opt.json"), opt.to_json())?;
    }
    Ok(())
}

/// Simulate (and audit) one scenario or a sweep. Returns the lines to print.
pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let scenario = load_scenario(&config.scenario, config.seed)?;
    let with_trace = config.mode == Mode::Simulate;
    if config.sweep_epsilon.is_empty() && config.sweep_duration.is_empty() {
        let outcome = simulate_and_audit(&scenario)?;
        write_outcome(&config.out, &outcome, with_trace)?;
        let mut lines = Vec::new();
        if let Some(e) = &outcome.opt_error {
            lines.push(format!("warning: optimum not computed: {e}"));
        }
        lines.push(outcome.report.summary());
        return Ok(lines);
    }

    let spec = SweepSpec {
        epsilons: if config.sweep_epsilon.is_empty() {
            vec![scenario.epsilon]
        } else {
            config.sweep_epsilon.clone()
        },
        durations: if config.sweep_duration.is_empty() {
            vec![1]
        } else {
            config.sweep_duration.clone()
        },
        beta_scale: config.beta_scale,
    };
    if spec.durations.contains(&0) {
        return Err(CliError::Validation(
            "sweep durations must be positive".into(),
        ));
    }
    let entries = run_sweep(&scenario, &spec, Execution::Parallel)?;
    let mut lines = Vec::new();
    for e in &entries {
        let dir = config
            .out
            .join(format!("eps_{}", e.epsilon))
            .join(format!("dur_{}", e.duration));
        write_outcome(&dir, &e.outcome, with_trace)?;
        lines.push(format!(
            "epsilon={} duration={} {}",
            e.epsilon,
            e.duration,
            e.outcome.report.summary()
        ));
    }
    fs::write(
        config.out.join("sweep_summary.csv"),
        sweep_summary_csv(&entries),
    )?;
    Ok(lines)
}

pub fn cmd_opt(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let scenario = load_scenario(&config.scenario, config.seed)?;
    let sol = solve_opt(&scenario).map_err(|e| match e {
        OptError::Model(m) => m.into(),
        other => CliError::Runtime(other.to_string()),
    })?;
    fs::create_dir_all(&config.out)?;
    fs::write(config.out.join("opt.json"), sol.to_json())?;
    Ok(vec![format!("opt_value={}", sol.opt_value)])
}

pub fn cmd_bandwidth_test(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let scenario = load_scenario(&config.scenario, config.seed)?;
    let est = bandwidth_test(&scenario)?;
    fs::create_dir_all(&config.out)?;
    fs::write(config.out.join("bandwidth.json"), est.to_json())?;
    let opt = est
        .opt_rate
        .map(|x| x.to_string())
        .unwrap_or_else(|| "n/a".into());
    Ok(vec![format!(
        "estimate={} opt={opt} converged={} rounds={}",
        est.estimate, est.converged, est.rounds_simulated
    )])
}

pub fn execute(config: &RunConfig) -> Result<Vec<String>, CliError> {
    match config.mode {
        Mode::Simulate | Mode::Audit => cmd_simulate(config),
        Mode::Opt => cmd_opt(config),
        Mode::Bwtest => cmd_bandwidth_test(config),
    }
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&config) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
