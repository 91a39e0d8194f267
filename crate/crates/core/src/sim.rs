//! Round-by-round fluid simulation.
//!
//! Each round `t`:
//!
//! 1. every active source emits its rate for `t` (warm-up or MIMD update,
//!    using feedback up to `t-1` only);
//! 2. every resource, in an order compatible with same-round hops, collects
//!    the cohorts scheduled to cross it (a cohort sent in round `s` crosses
//!    hop `r` in round `s + pre_delay(p, r)`), discards the excess over
//!    `cap(r, t)` through the loss policy, and passes survivors on;
//! 3. cohorts sent in round `t - δ_p` reach their destination, and the source
//!    learns their loss fraction.
//!
//! No queuing: excess is lost, never delayed.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::error::SimError;
use crate::loss::{Arrival, LossAllocator};
use crate::model::{ensure_valid, Round, RoundWindow, Scenario};
use crate::protocol::PathState;

/// Relative tolerance of the conservation checks.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// Per-connection record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub id: String,
    pub start: Round,
    pub end: Round,
    pub delay: u64,
    /// `sent[t - start]` for `t` in `T_p`.
    pub sent: Vec<f64>,
    /// `rcvd[t - start - delay]` for `t` in `T'_p`.
    pub rcvd: Vec<f64>,
    /// Sum of hop losses of the cohort arriving in round `t`, same indexing
    /// as `rcvd`.
    pub lost: Vec<f64>,
    /// Loss fraction observed by the source, same indexing as `rcvd`.
    pub lsr: Vec<f64>,
}

impl PathTrace {
    pub fn window(&self) -> RoundWindow {
        RoundWindow {
            first: self.start + self.delay,
            last: self.end + self.delay,
        }
    }

    pub fn sent_at(&self, t: Round) -> Option<f64> {
        t.checked_sub(self.start)
            .and_then(|i| self.sent.get(i as usize))
            .copied()
    }

    fn shifted(&self, v: &[f64], t: Round) -> Option<f64> {
        t.checked_sub(self.start + self.delay)
            .and_then(|i| v.get(i as usize))
            .copied()
    }

    pub fn rcvd_at(&self, t: Round) -> Option<f64> {
        self.shifted(&self.rcvd, t)
    }

    pub fn lost_at(&self, t: Round) -> Option<f64> {
        self.shifted(&self.lost, t)
    }

    pub fn lsr_at(&self, t: Round) -> Option<f64> {
        self.shifted(&self.lsr, t)
    }

    pub fn total_received(&self) -> f64 {
        self.rcvd.iter().sum()
    }

    pub fn total_lost(&self) -> f64 {
        self.lost.iter().sum()
    }

    /// Most received in any single round (`U_p`).
    pub fn max_received(&self) -> f64 {
        self.rcvd.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_sent(&self) -> f64 {
        self.sent.iter().copied().fold(0.0, f64::max)
    }
}

/// What one cohort brought into a resource and what it lost there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopRecord {
    pub path: usize,
    pub amount: f64,
    pub loss: f64,
}

/// Per-round accounting of one resource, for rounds `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceLedger {
    pub id: String,
    pub into: Vec<f64>,
    pub lost: Vec<f64>,
    pub cap: Vec<f64>,
    /// Hop records of all rounds, round `t` at `entries[offsets[t]..offsets[t+1]]`.
    pub entries: Vec<HopRecord>,
    pub offsets: Vec<usize>,
}

impl ResourceLedger {
    /// `lost(r,t)/into(r,t)`, zero when nothing entered.
    pub fn loss_ratio(&self, t: Round) -> f64 {
        let t = t as usize;
        match self.into.get(t) {
            Some(&into) if into > 0.0 => self.lost[t] / into,
            _ => 0.0,
        }
    }

    pub fn total_lost(&self) -> f64 {
        self.lost.iter().sum()
    }

    /// Per-cohort contributions and losses in round `t`.
    pub fn entries_at(&self, t: Round) -> &[HopRecord] {
        let t = t as usize;
        match (self.offsets.get(t), self.offsets.get(t + 1)) {
            (Some(&a), Some(&b)) => &self.entries[a..b],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scenario: Scenario,
    pub horizon: Option<Round>,
    pub paths: Vec<PathTrace>,
    pub resources: Vec<ResourceLedger>,
}

impl RunTrace {
    pub fn path_index(&self, id: &str) -> Option<usize> {
        self.paths.iter().position(|p| p.id == id)
    }

    /// CSV with header `round,sent,rcvd,lost,lsr` covering `start..=end+δ`.
    /// Fields undefined in a round are left empty.
    pub fn path_csv(&self, p: usize) -> String {
        let path = &self.paths[p];
        let mut out = String::from("round,sent,rcvd,lost,lsr\n");
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in path.start..=path.end + path.delay {
            let _ = writeln!(
                out,
                "{t},{},{},{},{}",
                fmt(path.sent_at(t)),
                fmt(path.rcvd_at(t)),
                fmt(path.lost_at(t)),
                fmt(path.lsr_at(t)),
            );
        }
        out
    }

    /// CSV with header `round,into,lost,cap` covering `0..=horizon`.
    pub fn resource_csv(&self, r: usize) -> String {
        let ledger = &self.resources[r];
        let mut out = String::from("round,into,lost,cap\n");
        for t in 0..ledger.into.len() {
            let cap = ledger.cap[t];
            let cap = if cap.is_infinite() {
                "inf".to_string()
            } else {
                cap.to_string()
            };
            let _ = writeln!(out, "{t},{},{},{cap}", ledger.into[t], ledger.lost[t]);
        }
        out
    }

    /// Writes `paths/<id>.csv` and `resources/<id>.csv` under `dir`.
    pub fn write_csv(&self, dir: &Path) -> io::Result<()> {
        let paths = dir.join("paths");
        let resources = dir.join("resources");
        std::fs::create_dir_all(&paths)?;
        std::fs::create_dir_all(&resources)?;
        for (i, p) in self.paths.iter().enumerate() {
            std::fs::write(paths.join(format!("{}.csv", p.id)), self.path_csv(i))?;
        }
        for (i, r) in self.resources.iter().enumerate() {
            std::fs::write(
                resources.join(format!("{}.csv", r.id)),
                self.resource_csv(i),
            )?;
        }
        Ok(())
    }
}

/// Checks per-cohort conservation (`sent = rcvd + lost`), the resource
/// discard rule, and that path losses and resource losses agree in total.
pub fn check_conservation(trace: &RunTrace) -> Result<(), String> {
    let tol = CONSERVATION_TOLERANCE;
    for p in &trace.paths {
        for (i, (&rcvd, &lost)) in p.rcvd.iter().zip(&p.lost).enumerate() {
            let sent = p.sent[i];
            if (sent - rcvd - lost).abs() > tol * sent.abs().max(1e-300) {
                return Err(format!(
                    "path '{}' round {}: sent {sent} != rcvd {rcvd} + lost {lost}",
                    p.id,
                    p.start + p.delay + i as u64
                ));
            }
        }
    }
    for r in &trace.resources {
        for t in 0..r.into.len() {
            let into = r.into[t];
            let expected = (into - r.cap[t]).max(0.0);
            if (r.lost[t] - expected).abs() > tol * into.max(1e-300) {
                return Err(format!(
                    "resource '{}' round {t}: lost {} but excess is {expected}",
                    r.id, r.lost[t]
                ));
            }
            if r.lost[t] > 0.0 && into <= r.cap[t] {
                return Err(format!(
                    "resource '{}' round {t}: discarded while uncongested",
                    r.id
                ));
            }
        }
    }
    let by_path: f64 = trace.paths.iter().map(PathTrace::total_lost).sum();
    let by_resource: f64 = trace.resources.iter().map(ResourceLedger::total_lost).sum();
    if (by_path - by_resource).abs() > tol * by_path.max(by_resource).max(1.0) {
        return Err(format!(
            "path losses {by_path} != resource losses {by_resource}"
        ));
    }
    Ok(())
}

/// Step-wise simulator. [`run`] drives it to the horizon; the bandwidth test
/// drives it manually so it can stop early.
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    order: Vec<usize>,
    /// Per resource: (path, pre_delay) of every route crossing it.
    visits: Vec<Vec<(usize, u64)>>,
    states: Vec<PathState>,
    /// Per path, per cohort: amount still alive.
    alive: Vec<Vec<f64>>,
    /// Per path, per cohort: accumulated hop losses.
    hop_lost: Vec<Vec<f64>>,
    allocator: LossAllocator,
    paths: Vec<PathTrace>,
    resources: Vec<ResourceLedger>,
    horizon: Option<Round>,
    next_round: Round,
    arrivals: Vec<Arrival>,
    cohorts: Vec<usize>,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        ensure_valid(scenario)?;
        let order = scenario
            .same_round_order()
            .expect("validated scenarios have an acyclic same-round order");
        let routes = scenario.indexed_routes();
        let mut visits = vec![Vec::new(); scenario.resources.len()];
        for (p, route) in routes.iter().enumerate() {
            let conn = &scenario.connections[p];
            for (k, &r) in route.iter().enumerate() {
                visits[r].push((p, u64::from(conn.pre_delay_at(k))));
            }
        }
        let horizon = scenario.horizon();
        let rounds = horizon.map_or(0, |h| h as usize + 1);
        let paths = scenario
            .connections
            .iter()
            .map(|c| {
                let n = c.duration() as usize;
                PathTrace {
                    id: c.id.clone(),
                    start: c.start,
                    end: c.end,
                    delay: u64::from(c.total_delay),
                    sent: Vec::with_capacity(n),
                    rcvd: Vec::with_capacity(n),
                    lost: Vec::with_capacity(n),
                    lsr: Vec::with_capacity(n),
                }
            })
            .collect();
        let resources = scenario
            .resources
            .iter()
            .map(|r| ResourceLedger {
                id: r.id.clone(),
                into: Vec::with_capacity(rounds),
                lost: Vec::with_capacity(rounds),
                cap: Vec::with_capacity(rounds),
                entries: Vec::new(),
                offsets: vec![0],
            })
            .collect();
        Ok(Simulator {
            scenario,
            order,
            visits,
            states: scenario.connections.iter().map(PathState::new).collect(),
            alive: scenario
                .connections
                .iter()
                .map(|c| vec![0.0; c.duration() as usize])
                .collect(),
            hop_lost: scenario
                .connections
                .iter()
                .map(|c| vec![0.0; c.duration() as usize])
                .collect(),
            allocator: LossAllocator::new(scenario),
            paths,
            resources,
            horizon,
            next_round: 0,
            arrivals: Vec::new(),
            cohorts: Vec::new(),
        })
    }

    /// Next round to be simulated.
    pub fn round(&self) -> Round {
        self.next_round
    }

    pub fn horizon(&self) -> Option<Round> {
        self.horizon
    }

    pub fn is_finished(&self) -> bool {
        self.horizon.is_none_or(|h| self.next_round > h)
    }

    /// Total amount delivered in round `t` across all paths (so far).
    pub fn delivered(&self, t: Round) -> f64 {
        self.paths.iter().filter_map(|p| p.rcvd_at(t)).sum()
    }

    pub fn step(&mut self) -> Result<(), SimError> {
        if self.is_finished() {
            return Ok(());
        }
        let t = self.next_round;
        let conns = &self.scenario.connections;

        for (p, conn) in conns.iter().enumerate() {
            if conn.is_active(t) {
                let rate = self.states[p].send(t)?;
                let i = (t - conn.start) as usize;
                self.alive[p][i] = rate;
                self.paths[p].sent.push(rate);
            }
        }

        for r in self.order.iter().copied() {
            let ledger = &mut self.resources[r];
            self.arrivals.clear();
            self.cohorts.clear();
            for &(p, pre) in &self.visits[r] {
                let conn = &conns[p];
                let Some(s) = t.checked_sub(pre) else {
                    continue;
                };
                if !conn.is_active(s) {
                    continue;
                }
                let i = (s - conn.start) as usize;
                self.cohorts.push(i);
                self.arrivals.push(Arrival {
                    path: p,
                    amount: self.alive[p][i],
                    sent: self.paths[p].sent[i],
                });
            }
            let cap = self.scenario.resources[r].capacity.at(t);
            let into: f64 = self.arrivals.iter().map(|a| a.amount).sum();
            let losses = self.allocator.allocate(&self.arrivals, cap)?;
            let mut lost = 0.0;
            for ((a, &loss), &i) in self.arrivals.iter().zip(&losses).zip(&self.cohorts) {
                self.alive[a.path][i] = (self.alive[a.path][i] - loss).max(0.0);
                self.hop_lost[a.path][i] += loss;
                lost += loss;
                ledger.entries.push(HopRecord {
                    path: a.path,
                    amount: a.amount,
                    loss,
                });
            }
            ledger.into.push(into);
            ledger.lost.push(lost);
            ledger.cap.push(cap);
            ledger.offsets.push(ledger.entries.len());
        }

        for (p, conn) in conns.iter().enumerate() {
            let window = conn.window();
            if !window.contains(t) {
                continue;
            }
            let i = (t - window.first) as usize;
            let rcvd = self.alive[p][i];
            let lsr = self.states[p].record_feedback(t, rcvd)?;
            let trace = &mut self.paths[p];
            trace.rcvd.push(rcvd);
            trace.lost.push(self.hop_lost[p][i]);
            trace.lsr.push(lsr);
        }

        self.next_round += 1;
        Ok(())
    }

    /// Runs the remaining rounds and returns the checked trace.
    pub fn finish(mut self) -> Result<RunTrace, SimError> {
        while !self.is_finished() {
            self.step()?;
        }
        let trace = RunTrace {
            scenario: self.scenario.clone(),
            horizon: self.horizon,
            paths: self.paths,
            resources: self.resources,
        };
        check_conservation(&trace).map_err(SimError::Conservation)?;
        Ok(trace)
    }

    /// Trace of the rounds simulated so far, without the drain checks.
    pub fn partial_trace(&self) -> RunTrace {
        RunTrace {
            scenario: self.scenario.clone(),
            horizon: self.horizon,
            paths: self.paths.clone(),
            resources: self.resources.clone(),
        }
    }
}

/// Simulates the scenario through its horizon.
pub fn run(scenario: &Scenario) -> Result<RunTrace, SimError> {
    Simulator::new(scenario)?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capacity, ConnectionSpec, LossPolicy, ResourceSpec};

    fn link(id: &str, cap: f64) -> ResourceSpec {
        ResourceSpec {
            id: id.into(),
            capacity: Capacity::constant(cap),
        }
    }

    fn path(id: &str, route: &[&str], f0: f64, len: u64) -> ConnectionSpec {
        ConnectionSpec {
            id: id.into(),
            route: route.iter().map(|r| r.to_string()).collect(),
            value: 1.0,
            start: 0,
            end: len - 1,
            total_delay: 0,
            hop_delays: vec![0; route.len()],
            start_rate: f0,
            alpha: 0.1,
            beta: 0.5,
        }
    }

    fn scenario(resources: Vec<ResourceSpec>, connections: Vec<ConnectionSpec>) -> Scenario {
        Scenario {
            resources,
            connections,
            epsilon: 0.1,
            loss_policy: LossPolicy::Proportional,
        }
    }

    #[test]
    fn lossless_growth_is_geometric() {
        let s = scenario(
            vec![link("l", f64::INFINITY)],
            vec![path("p", &["l"], 1.0, 3)],
        );
        let tr = run(&s).unwrap();
        let p = &tr.paths[0];
        let expect = [1.0, 1.1, 1.21];
        for (got, want) in p.sent.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(p.rcvd, p.sent);
        assert!(p.lost.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn overload_discards_only_excess() {
        let s = scenario(vec![link("l", 10.0)], vec![path("p", &["l"], 20.0, 2)]);
        let tr = run(&s).unwrap();
        let r = &tr.resources[0];
        assert_eq!(r.into[0], 20.0);
        assert_eq!(r.lost[0], 10.0);
        assert_eq!(tr.paths[0].rcvd[0], 10.0);
        assert_eq!(tr.paths[0].lsr[0], 0.5);
    }

    #[test]
    fn shared_link_losses_are_proportional() {
        let s = scenario(
            vec![link("l", 120.0)],
            vec![path("a", &["l"], 100.0, 1), path("b", &["l"], 50.0, 1)],
        );
        let tr = run(&s).unwrap();
        assert!((tr.paths[0].lost[0] - 20.0).abs() < 1e-12);
        assert!((tr.paths[1].lost[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn cohorts_cross_hops_at_their_pre_delay() {
        // Route a -> b with pre-delays 1 and 3, arrival at 4.
        let mut p = path("p", &["a", "b"], 5.0, 1);
        p.total_delay = 4;
        p.hop_delays = vec![3, 1];
        let s = scenario(vec![link("a", 100.0), link("b", 2.0)], vec![p]);
        let tr = run(&s).unwrap();
        assert_eq!(tr.horizon, Some(4));
        assert_eq!(tr.resources[0].into, vec![0.0, 5.0, 0.0, 0.0, 0.0]);
        assert_eq!(tr.resources[1].into, vec![0.0, 0.0, 0.0, 5.0, 0.0]);
        assert_eq!(tr.resources[1].lost[3], 3.0);
        assert_eq!(tr.paths[0].rcvd_at(4), Some(2.0));
    }

    #[test]
    fn same_round_hops_see_survivors() {
        // Both hops in round 0. "a" halves the cohort; "b" sees 10, not 20.
        let s = scenario(
            vec![link("a", 10.0), link("b", 8.0)],
            vec![path("p", &["a", "b"], 20.0, 1)],
        );
        let tr = run(&s).unwrap();
        assert_eq!(tr.resources[1].into[0], 10.0);
        assert_eq!(tr.paths[0].rcvd[0], 8.0);
        assert_eq!(tr.paths[0].lost[0], 12.0);
    }

    #[test]
    fn invalid_scenario_is_refused() {
        let mut s = scenario(vec![link("l", 1.0)], vec![path("p", &["l"], 1.0, 2)]);
        s.connections[0].alpha = s.connections[0].beta;
        assert!(matches!(run(&s), Err(SimError::Model(_))));
    }

    #[test]
    fn empty_scenario_runs() {
        let s = scenario(vec![link("l", 1.0)], vec![]);
        let tr = run(&s).unwrap();
        assert!(tr.resources[0].into.is_empty());
        assert_eq!(tr.horizon, None);
    }

    #[test]
    fn csv_layout() {
        let mut p = path("p", &["l"], 20.0, 2);
        p.total_delay = 1;
        p.hop_delays = vec![1];
        let s = scenario(vec![link("l", 10.0)], vec![p]);
        let tr = run(&s).unwrap();
        let csv = tr.path_csv(0);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "round,sent,rcvd,lost,lsr");
        assert_eq!(lines[1], "0,20,,,");
        assert_eq!(lines[2], "1,20,10,10,0.5");
        assert_eq!(lines[3], "2,,10,10,0.5");
        let res = tr.resource_csv(0);
        assert!(res.starts_with("round,into,lost,cap\n0,20,10,10\n"));
    }
}
