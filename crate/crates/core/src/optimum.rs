//! Static optimum: the best weighted throughput of any assignment of one
//! fixed rate per connection over its active window.
//!
//! A connection active during `T_p` loads resource `r` during the rounds
//! `T_p + pre_delay(p, r)`. For every `(r, t)` where at least one connection
//! is present, the rates of the connections present must fit within
//! `cap(r, t)`. The objective is `Σ val(p)·|T_p|·f(p)`.
//!
//! Rounds are grouped into segments over which the set of present
//! connections and the capacity are constant, and segments with the same
//! connection set collapse to one LP row carrying the smallest capacity.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::OptError;
use crate::model::{ensure_valid, Round, Scenario};
use crate::simplex::{maximize_packing, LpOutcome};

/// Relative optimality gap the LP answer must certify.
pub const OPTIMALITY_GAP: f64 = 1e-6;
/// Absolute slack allowed on capacity constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Largest instance [`brute_force_opt`] accepts.
pub const BRUTE_FORCE_MAX_PATHS: usize = 4;

/// Rounds `from..=to` of one resource with a fixed set of present
/// connections and a fixed capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSegment {
    pub resource: usize,
    pub from: Round,
    pub to: Round,
    pub paths: Vec<usize>,
    pub cap: f64,
}

/// Inclusive range of rounds in which a resource's constraint binds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightRange {
    pub resource: String,
    pub from_round: Round,
    pub to_round: Round,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumSolution {
    /// Rate per connection id.
    pub rates: BTreeMap<String, f64>,
    pub opt_value: f64,
    pub tight_constraints: Vec<TightRange>,
}

impl OptimumSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    /// Rates in scenario connection order.
    pub fn rate_vector(&self, scenario: &Scenario) -> Vec<f64> {
        scenario
            .connections
            .iter()
            .map(|c| self.rates.get(&c.id).copied().unwrap_or(0.0))
            .collect()
    }
}

/// Every `(resource, round)` constraint with at least one connection
/// present, grouped into constant segments. Rounds run up to the horizon.
pub fn constraint_segments(scenario: &Scenario) -> Vec<ConstraintSegment> {
    let Some(horizon) = scenario.horizon() else {
        return Vec::new();
    };
    let index = scenario.resource_index();
    // Per resource: (path, first loaded round, last loaded round).
    let mut loads: Vec<Vec<(usize, Round, Round)>> = vec![Vec::new(); scenario.resources.len()];
    for (p, c) in scenario.connections.iter().enumerate() {
        for (k, r) in c.route.iter().enumerate() {
            let pre = u64::from(c.pre_delay_at(k));
            loads[index[r.as_str()]].push((p, c.start + pre, c.end + pre));
        }
    }
    let mut out = Vec::new();
    for (r, spans) in loads.iter().enumerate() {
        if spans.is_empty() {
            continue;
        }
        let mut cuts: Vec<Round> = spans
            .iter()
            .flat_map(|&(_, a, b)| [a, b + 1])
            .chain(scenario.resources[r].capacity.breakpoints())
            .filter(|&t| t <= horizon)
            .collect();
        cuts.push(0);
        cuts.push(horizon + 1);
        cuts.sort_unstable();
        cuts.dedup();
        for w in cuts.windows(2) {
            let (from, to) = (w[0], w[1] - 1);
            let paths: Vec<usize> = spans
                .iter()
                .filter(|&&(_, a, b)| a <= from && from <= b)
                .map(|&(p, _, _)| p)
                .collect();
            if paths.is_empty() {
                continue;
            }
            out.push(ConstraintSegment {
                resource: r,
                from,
                to,
                paths,
                cap: scenario.resources[r].capacity.at(from),
            });
        }
    }
    out
}

/// Largest `load − cap` over all constraints for the given rates (in
/// connection order). Non-positive means feasible.
pub fn max_violation(scenario: &Scenario, rates: &[f64]) -> f64 {
    constraint_segments(scenario)
        .iter()
        .map(|s| s.paths.iter().map(|&p| rates[p]).sum::<f64>() - s.cap)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Objective weight `val(p)·|T_p|` of each connection.
pub fn weights(scenario: &Scenario) -> Vec<f64> {
    scenario
        .connections
        .iter()
        .map(|c| c.value * c.duration() as f64)
        .collect()
}

/// Distinct finite rows: connection set -> smallest capacity.
fn packing_rows(segments: &[ConstraintSegment]) -> Vec<(Vec<usize>, f64)> {
    let mut rows: HashMap<&[usize], f64> = HashMap::new();
    for s in segments {
        if s.cap.is_finite() {
            let e = rows.entry(s.paths.as_slice()).or_insert(f64::INFINITY);
            *e = e.min(s.cap);
        }
    }
    let mut rows: Vec<(Vec<usize>, f64)> = rows.into_iter().map(|(k, v)| (k.to_vec(), v)).collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    rows
}

fn check_bounded(
    scenario: &Scenario,
    rows: &[(Vec<usize>, f64)],
    w: &[f64],
) -> Result<(), OptError> {
    let mut covered = vec![false; w.len()];
    for (paths, _) in rows {
        for &p in paths {
            covered[p] = true;
        }
    }
    match (0..w.len()).find(|&p| w[p] > 0.0 && !covered[p]) {
        Some(p) => Err(OptError::Unbounded(scenario.connections[p].id.clone())),
        None => Ok(()),
    }
}

fn assemble(
    scenario: &Scenario,
    segments: &[ConstraintSegment],
    rates: Vec<f64>,
) -> OptimumSolution {
    let opt_value = weights(scenario)
        .iter()
        .zip(&rates)
        .map(|(w, f)| w * f)
        .sum();
    let mut tight: Vec<TightRange> = Vec::new();
    for s in segments {
        if !s.cap.is_finite() {
            continue;
        }
        let load: f64 = s.paths.iter().map(|&p| rates[p]).sum();
        if s.cap - load > FEASIBILITY_TOL * s.cap.max(1.0) {
            continue;
        }
        let id = &scenario.resources[s.resource].id;
        match tight.last_mut() {
            Some(last) if &last.resource == id && last.to_round + 1 == s.from => {
                last.to_round = s.to
            }
            _ => tight.push(TightRange {
                resource: id.clone(),
                from_round: s.from,
                to_round: s.to,
            }),
        }
    }
    OptimumSolution {
        rates: scenario
            .connections
            .iter()
            .zip(rates)
            .map(|(c, f)| (c.id.clone(), f))
            .collect(),
        opt_value,
        tight_constraints: tight,
    }
}

/// Solves the static-optimum LP exactly (dense simplex) and certifies the
/// answer with its dual.
pub fn solve_opt(scenario: &Scenario) -> Result<OptimumSolution, OptError> {
    ensure_valid(scenario)?;
    let segments = constraint_segments(scenario);
    let w = weights(scenario);
    let rows = packing_rows(&segments);
    check_bounded(scenario, &rows, &w)?;

    let n = w.len();
    let a: Vec<Vec<f64>> = rows
        .iter()
        .map(|(paths, _)| {
            let mut row = vec![0.0; n];
            for &p in paths {
                row[p] = 1.0;
            }
            row
        })
        .collect();
    let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let sol = match maximize_packing(&w, &a, &b) {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Unbounded(p) => {
            return Err(OptError::Unbounded(scenario.connections[p].id.clone()))
        }
    };

    // Weak duality: b·y ≥ any feasible objective once y is dual feasible.
    // Repair tiny dual infeasibility before measuring the gap.
    let mut y = sol.y.clone();
    for (p, &wp) in w.iter().enumerate() {
        let covered: f64 = rows
            .iter()
            .zip(&y)
            .filter(|(r, _)| r.0.contains(&p))
            .map(|(_, y)| y)
            .sum();
        if covered < wp {
            if let Some(i) = rows.iter().position(|r| r.0.contains(&p)) {
                y[i] += wp - covered;
            }
        }
    }
    let dual: f64 = b.iter().zip(&y).map(|(b, y)| b * y).sum();
    let gap = (dual - sol.objective).abs() / sol.objective.abs().max(1.0);
    if gap > OPTIMALITY_GAP {
        return Err(OptError::NotConverged(gap));
    }

    let mut rates = sol.x;
    for (f, w) in rates.iter_mut().zip(&w) {
        if *w == 0.0 {
            *f = 0.0;
        }
    }
    Ok(assemble(scenario, &segments, rates))
}

/// Exhaustive search over the grid `{0, h, 2h, …}` per connection. The last
/// coordinate is set to its largest feasible grid value; partial assignments
/// whose optimistic completion cannot beat the incumbent are skipped. Only
/// for tiny instances.
pub fn brute_force_opt(scenario: &Scenario, resolution: f64) -> Result<OptimumSolution, OptError> {
    ensure_valid(scenario)?;
    let n = scenario.connections.len();
    if n > BRUTE_FORCE_MAX_PATHS {
        return Err(OptError::TooManyPaths {
            max: BRUTE_FORCE_MAX_PATHS,
            got: n,
        });
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(OptError::BadResolution(resolution));
    }
    let segments = constraint_segments(scenario);
    let w = weights(scenario);
    let rows = packing_rows(&segments);
    check_bounded(scenario, &rows, &w)?;

    let steps_for = |cap: f64| ((cap + FEASIBILITY_TOL) / resolution).floor() as u64;
    let max_steps: Vec<u64> = (0..n)
        .map(|p| {
            if w[p] == 0.0 {
                return 0;
            }
            rows.iter()
                .filter(|r| r.0.contains(&p))
                .map(|r| steps_for(r.1))
                .min()
                .unwrap_or(0)
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    // Optimistic value of coordinates order[d..].
    let mut tail = vec![0.0; n + 1];
    for d in (0..n).rev() {
        let p = order[d];
        tail[d] = tail[d + 1] + w[p] * max_steps[p] as f64 * resolution;
    }

    struct Search<'a> {
        rows: &'a [(Vec<usize>, f64)],
        w: &'a [f64],
        order: &'a [usize],
        tail: &'a [f64],
        max_steps: &'a [u64],
        h: f64,
        load: Vec<f64>,
        current: Vec<u64>,
        best: Vec<u64>,
        best_value: f64,
    }

    impl Search<'_> {
        fn room(&self, p: usize) -> u64 {
            let mut k = self.max_steps[p];
            for (i, (paths, cap)) in self.rows.iter().enumerate() {
                if paths.contains(&p) {
                    let slack = cap - self.load[i] + FEASIBILITY_TOL;
                    let fit = if slack < 0.0 {
                        0
                    } else {
                        (slack / self.h).floor() as u64
                    };
                    k = k.min(fit);
                }
            }
            k
        }

        fn set(&mut self, p: usize, k: u64) {
            let delta = (k as f64 - self.current[p] as f64) * self.h;
            for (i, (paths, _)) in self.rows.iter().enumerate() {
                if paths.contains(&p) {
                    self.load[i] += delta;
                }
            }
            self.current[p] = k;
        }

        fn value(&self) -> f64 {
            self.current
                .iter()
                .zip(self.w)
                .map(|(&k, w)| w * k as f64 * self.h)
                .sum()
        }

        fn go(&mut self, depth: usize, partial: f64) {
            let n = self.order.len();
            if depth == n {
                let v = self.value();
                if v > self.best_value {
                    self.best_value = v;
                    self.best = self.current.clone();
                }
                return;
            }
            if partial + self.tail[depth] <= self.best_value {
                return;
            }
            let p = self.order[depth];
            let room = self.room(p);
            if depth + 1 == n {
                self.set(p, room);
                self.go(depth + 1, partial);
                self.set(p, 0);
                return;
            }
            for k in (0..=room).rev() {
                self.set(p, k);
                let part = partial + self.w[p] * k as f64 * self.h;
                self.go(depth + 1, part);
            }
            self.set(p, 0);
        }
    }

    let mut search = Search {
        rows: &rows,
        w: &w,
        order: &order,
        tail: &tail,
        max_steps: &max_steps,
        h: resolution,
        load: vec![0.0; rows.len()],
        current: vec![0; n],
        best: vec![0; n],
        best_value: f64::NEG_INFINITY,
    };
    search.go(0, 0.0);
    let rates = search.best.iter().map(|&k| k as f64 * resolution).collect();
    Ok(assemble(scenario, &segments, rates))
}
