//! Multi-path bandwidth test: run the protocol on every path with equal
//! value until the aggregate delivered rate settles, and report that rate.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, OptError};
use crate::model::Scenario;
use crate::optimum::solve_opt;
use crate::sim::Simulator;

/// Relative change between consecutive windows that counts as converged.
pub const CONVERGENCE_CHANGE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthEstimate {
    /// Mean aggregate delivered rate over the trailing window.
    pub estimate: f64,
    /// Aggregate rate of the static optimum (`Σ f(p)`), when bounded.
    pub opt_rate: Option<f64>,
    /// Window length in rounds.
    pub window: u64,
    pub rounds_simulated: u64,
    pub converged: bool,
}

impl BandwidthEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Window length: `max_p (1+δ_p)/(β_p·ε)` rounds, at least one.
pub fn convergence_window(scenario: &Scenario) -> u64 {
    scenario
        .connections
        .iter()
        .map(|c| ((1.0 + f64::from(c.total_delay)) / (c.beta * scenario.epsilon)).ceil() as u64)
        .max()
        .unwrap_or(1)
        .max(1)
}

pub fn bandwidth_test(scenario: &Scenario) -> Result<BandwidthEstimate, AuditError> {
    let Some(first) = scenario.connections.first() else {
        return Ok(BandwidthEstimate {
            estimate: 0.0,
            opt_rate: Some(0.0),
            window: 1,
            rounds_simulated: 0,
            converged: true,
        });
    };
    if scenario
        .connections
        .iter()
        .any(|c| c.start != first.start || c.end != first.end)
    {
        return Err(AuditError::HeterogeneousIntervals);
    }
    let mut scenario = scenario.clone();
    for c in &mut scenario.connections {
        c.value = 1.0;
    }
    let window = convergence_window(&scenario);
    let max_delay = scenario
        .connections
        .iter()
        .map(|c| u64::from(c.total_delay));
    // Rounds in which every path is delivering.
    let measure_from = first.start + max_delay.clone().max().unwrap_or(0);
    let measure_to = first.end + max_delay.min().unwrap_or(0);

    let mut sim = Simulator::new(&scenario).map_err(AuditError::Sim)?;
    // prefix[i] = total delivered over the first i measured rounds.
    let mut prefix = vec![0.0];
    let mut converged = false;
    while !sim.is_finished() {
        let t = sim.round();
        sim.step()?;
        if t < measure_from || t > measure_to {
            continue;
        }
        let total = prefix.last().copied().unwrap_or(0.0) + sim.delivered(t);
        prefix.push(total);
        let n = prefix.len() - 1;
        let w = window as usize;
        if n >= 2 * w {
            let recent = (prefix[n] - prefix[n - w]) / w as f64;
            let before = (prefix[n - w] - prefix[n - 2 * w]) / w as f64;
            if before > 0.0 && (recent - before).abs() <= CONVERGENCE_CHANGE * before {
                converged = true;
                break;
            }
        }
        if t == measure_to {
            break;
        }
    }
    let n = prefix.len() - 1;
    let span = n.min(window as usize);
    let estimate = if span == 0 {
        0.0
    } else {
        (prefix[n] - prefix[n - span]) / span as f64
    };

    let opt_rate = match solve_opt(&scenario) {
        Ok(sol) => Some(sol.rates.values().sum()),
        Err(OptError::Unbounded(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(BandwidthEstimate {
        estimate,
        opt_rate,
        window,
        rounds_simulated: sim.round(),
        converged,
    })
}
