//! How a congested resource splits its excess among the cohorts entering it.
//!
//! A resource discards exactly `max(0, into − cap)`. Under
//! [`LossPolicy::Proportional`] every cohort loses the same fraction, which
//! makes per-round loss perfectly fair. Under [`LossPolicy::AdversarialFair`]
//! one victim absorbs as much of the excess as its running fairness budget
//! allows:
//!
//! ```text
//! budget_p = (1+ε)·Σ ρ(r, t)  −  Σ loss_p(r, t) / sent_p
//! ```
//!
//! summed over every hop event of every cohort of `p`, where
//! `ρ = lost(r,t)/into(r,t)`. Keeping `budget_p ≥ 0` after each event keeps
//! the cumulative per-path loss fraction within `(1+ε)` times the sum of the
//! resource loss ratios along the path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::model::{LossPolicy, Scenario};

/// One cohort entering a resource.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    /// Connection index in the scenario.
    pub path: usize,
    /// Amount still alive when entering the resource.
    pub amount: f64,
    /// Amount the source injected for this cohort.
    pub sent: f64,
}

/// Stateful loss allocator for one run.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum LossAllocator {
    Proportional,
    AdversarialFair {
        epsilon: f64,
        target: Option<usize>,
        rng: ChaCha8Rng,
        budget: Vec<f64>,
    },
}

impl LossAllocator {
    pub fn new(scenario: &Scenario) -> Self {
        match &scenario.loss_policy {
            LossPolicy::Proportional => LossAllocator::Proportional,
            LossPolicy::AdversarialFair { seed, target_path } => LossAllocator::AdversarialFair {
                epsilon: scenario.epsilon,
                target: target_path
                    .as_ref()
                    .and_then(|id| scenario.connections.iter().position(|c| &c.id == id)),
                rng: ChaCha8Rng::seed_from_u64(*seed),
                budget: vec![0.0; scenario.connections.len()],
            },
        }
    }

    /// Remaining fairness budget of `path`, or `None` for the proportional
    /// policy, which needs none.
    pub fn budget(&self, path: usize) -> Option<f64> {
        match self {
            LossAllocator::Proportional => None,
            LossAllocator::AdversarialFair { budget, .. } => Some(budget[path]),
        }
    }

    /// Loss per arrival (same order as `arrivals`).
    pub fn allocate(&mut self, arrivals: &[Arrival], cap: f64) -> Result<Vec<f64>, SimError> {
        if let Some(a) = arrivals
            .iter()
            .find(|a| a.amount.is_nan() || a.amount < 0.0)
        {
            return Err(SimError::NegativeContribution(a.amount));
        }
        let into: f64 = arrivals.iter().map(|a| a.amount).sum();
        let excess = (into - cap).max(0.0);
        // ρ = 0 and no loss leaves every budget unchanged.
        if excess == 0.0 {
            return Ok(vec![0.0; arrivals.len()]);
        }
        let ratio = excess / into;
        match self {
            LossAllocator::Proportional => Ok(proportional(arrivals, ratio)),
            LossAllocator::AdversarialFair {
                epsilon,
                target,
                rng,
                budget,
            } => {
                let victim = match *target {
                    Some(t) => arrivals.iter().position(|a| a.path == t && a.amount > 0.0),
                    None => {
                        let live: Vec<usize> = arrivals
                            .iter()
                            .enumerate()
                            .filter(|(_, a)| a.amount > 0.0)
                            .map(|(i, _)| i)
                            .collect();
                        (!live.is_empty()).then(|| live[rng.gen_range(0..live.len())])
                    }
                };
                let losses = match victim {
                    None => proportional(arrivals, ratio),
                    Some(v) => biased(arrivals, v, excess, ratio, *epsilon, budget),
                };
                for (a, loss) in arrivals.iter().zip(&losses) {
                    budget[a.path] += (1.0 + *epsilon) * ratio - loss / a.sent;
                }
                Ok(losses)
            }
        }
    }
}

/// Stateless entry point: losses at one resource in one round.
pub fn allocate_loss(
    allocator: &mut LossAllocator,
    arrivals: &[Arrival],
    cap: f64,
) -> Result<Vec<f64>, SimError> {
    allocator.allocate(arrivals, cap)
}

fn proportional(arrivals: &[Arrival], ratio: f64) -> Vec<f64> {
    arrivals.iter().map(|a| a.amount * ratio).collect()
}

fn biased(
    arrivals: &[Arrival],
    victim: usize,
    excess: f64,
    ratio: f64,
    epsilon: f64,
    budget: &[f64],
) -> Vec<f64> {
    let v = arrivals[victim];
    let fair_share = v.amount * ratio;
    let allowance = v.sent * (budget[v.path] + (1.0 + epsilon) * ratio);
    let others: f64 = arrivals
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != victim)
        .map(|(_, a)| a.amount)
        .sum();
    let victim_loss = if others == 0.0 {
        excess
    } else {
        allowance.max(fair_share).min(v.amount).min(excess)
    };
    let rest_ratio = if others > 0.0 {
        ((excess - victim_loss) / others).clamp(0.0, 1.0)
    } else {
        0.0
    };
    arrivals
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if i == victim {
                victim_loss
            } else {
                a.amount * rest_ratio
            }
        })
        .collect()
}
