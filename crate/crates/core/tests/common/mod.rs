#![allow(dead_code)]

use mimd_core::model::{Capacity, ConnectionSpec, LossPolicy, ResourceSpec, Scenario};
use mimd_core::sim::RunTrace;

pub fn link(id: &str, cap: f64) -> ResourceSpec {
    ResourceSpec {
        id: id.into(),
        capacity: Capacity::constant(cap),
    }
}

/// A connection whose hops all sit at the source end (`pre_delay = 0`).
pub fn conn(id: &str, route: &[&str], start: u64, end: u64, delay: u32) -> ConnectionSpec {
    ConnectionSpec {
        id: id.into(),
        route: route.iter().map(|r| r.to_string()).collect(),
        value: 1.0,
        start,
        end,
        total_delay: delay,
        hop_delays: vec![delay; route.len()],
        start_rate: 1.0,
        alpha: 0.01,
        beta: 0.1,
    }
}

pub fn scenario(
    resources: Vec<ResourceSpec>,
    connections: Vec<ConnectionSpec>,
    epsilon: f64,
) -> Scenario {
    Scenario {
        resources,
        connections,
        epsilon,
        loss_policy: LossPolicy::Proportional,
    }
}

/// Relative comparison with an absolute floor of `rel` near zero.
pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Recomputes every delivery from the per-hop records alone and compares it
/// with what the trace reports.
pub fn conservation_errors(trace: &RunTrace) -> Vec<String> {
    let mut errors = Vec::new();
    let s = &trace.scenario;
    let index = s.resource_index();
    for (p, (c, path)) in s.connections.iter().zip(&trace.paths).enumerate() {
        for t in c.start..=c.end {
            let sent = path.sent_at(t).unwrap();
            let mut alive = sent;
            for (k, r) in c.route.iter().enumerate() {
                let round = t + u64::from(c.total_delay - c.hop_delays[k]);
                let ledger = &trace.resources[index[r.as_str()]];
                let rec: Vec<_> = ledger
                    .entries_at(round)
                    .iter()
                    .filter(|h| h.path == p)
                    .collect();
                if rec.len() != 1 {
                    errors.push(format!(
                        "{} cohort {t}: {} records at {r}@{round}",
                        c.id,
                        rec.len()
                    ));
                    continue;
                }
                if !rel_close(rec[0].amount, alive, 1e-9) {
                    errors.push(format!(
                        "{} cohort {t}: entered {r} with {} not {alive}",
                        c.id, rec[0].amount
                    ));
                }
                alive -= rec[0].loss;
            }
            let arrive = t + u64::from(c.total_delay);
            let rcvd = path.rcvd_at(arrive).unwrap();
            let lost = path.lost_at(arrive).unwrap();
            if !rel_close(rcvd, alive, 1e-9) {
                errors.push(format!(
                    "{} cohort {t}: rcvd {rcvd}, hops leave {alive}",
                    c.id
                ));
            }
            if !rel_close(sent, rcvd + lost, 1e-9) {
                errors.push(format!(
                    "{} cohort {t}: sent {sent} != {rcvd} + {lost}",
                    c.id
                ));
            }
        }
    }
    for r in &trace.resources {
        for t in 0..r.into.len() as u64 {
            let entries = r.entries_at(t);
            let into: f64 = entries.iter().map(|h| h.amount).sum();
            let lost: f64 = entries.iter().map(|h| h.loss).sum();
            let excess = (into - r.cap[t as usize]).max(0.0);
            if !rel_close(lost, excess, 1e-9) {
                errors.push(format!("{}@{t}: lost {lost}, excess {excess}", r.id));
            }
        }
    }
    let by_path: f64 = trace.paths.iter().map(|p| p.lost.iter().sum::<f64>()).sum();
    let by_res: f64 = trace
        .resources
        .iter()
        .map(|r| r.lost.iter().sum::<f64>())
        .sum();
    if !rel_close(by_path, by_res, 1e-9) {
        errors.push(format!("path losses {by_path} != resource losses {by_res}"));
    }
    errors
}
