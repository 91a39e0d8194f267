//! Post-run checks and measurements.
//!
//! Per connection `p`, over its shifted window `T'_p`:
//!
//! * throughput vs. loss:
//!   `Σ rcvd ≥ (β/α − 1)·Σ lost − (δ+1)·f₀/α`;
//! * accumulated loss fraction:
//!   `Σ lsr ≥ α(1−β)/(β(1+α))·(|T|−1−δ) − (1−β)/β·(1+δ)·ln⁺(βU/((β−α)f₀))`,
//!   where `U` is the most received in one round;
//! * sent-rate ceiling: no round sends more than `max(f₀, βU/(β−α))`;
//! * fairness: `Σ lsr ≤ (1+ε̂)·Σ_t Σ_r lost(r,·)/into(r,·)`, with ε̂ measured.
//!
//! Slacks are reported as LHS − RHS. Both inequalities hold for every run of
//! the protocol whatever the loss policy, so a negative slack beyond the
//! tolerance means a simulator bug.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::AuditError;
use crate::num::{extended_f64, extended_f64_opt};
use crate::optimum::OptimumSolution;
use crate::sim::RunTrace;

/// Relative tolerance on lemma slacks.
pub const SLACK_TOLERANCE: f64 = 1e-6;

/// Protocol parameters for a target `ε`: `β = beta_scale·ε` and
/// `α = ε·β·val`. The steady single-link loss fraction is then `α/β = ε·val`.
pub fn theorem_parameters(
    epsilon: f64,
    val: f64,
    beta_scale: f64,
) -> Result<(f64, f64), AuditError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(AuditError::Parameter(format!(
            "epsilon {epsilon} not in (0,1)"
        )));
    }
    if !(val > 0.0 && val <= 1.0) {
        return Err(AuditError::Parameter(format!("val {val} not in (0,1]")));
    }
    if !(beta_scale > 0.0 && beta_scale <= 1.0) {
        return Err(AuditError::Parameter(format!(
            "beta_scale {beta_scale} not in (0,1]"
        )));
    }
    let beta = beta_scale * epsilon;
    Ok((epsilon * beta * val, beta))
}

/// `ln⁺(max(f₀, βU/(β−α)) / f₀)`: the log of the largest rate the source
/// can ever reach relative to where it started.
fn growth_log(alpha: f64, beta: f64, u: f64, f0: f64) -> f64 {
    (beta * u / ((beta - alpha) * f0)).ln().max(0.0)
}

/// LHS − RHS of the throughput-vs-loss inequality for connection `p`.
pub fn check_lemma1(trace: &RunTrace, p: usize) -> f64 {
    let c = &trace.scenario.connections[p];
    let path = &trace.paths[p];
    let rcvd = path.total_received();
    let lost = path.total_lost();
    let rhs =
        (c.beta / c.alpha - 1.0) * lost - (f64::from(c.total_delay) + 1.0) * c.start_rate / c.alpha;
    rcvd - rhs
}

/// LHS − RHS of the loss-fraction inequality for connection `p`, or `None`
/// when nothing was ever received (`U = 0`).
pub fn check_lemma3(trace: &RunTrace, p: usize) -> Option<f64> {
    let c = &trace.scenario.connections[p];
    let path = &trace.paths[p];
    let u = path.max_received();
    if u <= 0.0 {
        return None;
    }
    let (a, b) = (c.alpha, c.beta);
    let d = f64::from(c.total_delay);
    let lhs: f64 = path.lsr.iter().sum();
    let rhs = a * (1.0 - b) / (b * (1.0 + a)) * (c.duration() as f64 - 1.0 - d)
        - (1.0 - b) / b * (1.0 + d) * growth_log(a, b, u, c.start_rate);
    Some(lhs - rhs)
}

/// Largest rate connection `p` may ever send given its `U`:
/// `max(f₀, βU/(β−α))`.
pub fn sent_ceiling(trace: &RunTrace, p: usize) -> f64 {
    let c = &trace.scenario.connections[p];
    let u = trace.paths[p].max_received();
    c.start_rate.max(c.beta * u / (c.beta - c.alpha))
}

/// `(A_p, B_p)`: accumulated loss fraction of the path, and the sum of the
/// loss ratios of the resources its cohorts crossed.
pub fn fairness_sums(trace: &RunTrace, p: usize) -> (f64, f64) {
    let c = &trace.scenario.connections[p];
    let path = &trace.paths[p];
    let index = trace.scenario.resource_index();
    let hops: Vec<(usize, u64)> = c
        .route
        .iter()
        .enumerate()
        .map(|(k, r)| (index[r.as_str()], u64::from(c.pre_delay_at(k))))
        .collect();
    let a: f64 = path.lsr.iter().sum();
    let b: f64 = (c.start..=c.end)
        .map(|s| {
            hops.iter()
                .map(|&(r, pre)| trace.resources[r].loss_ratio(s + pre))
                .sum::<f64>()
        })
        .sum();
    (a, b)
}

fn epsilon_hat_of(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b - 1.0
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Smallest ε for which the fair-loss condition holds on every path.
pub fn measure_fairness(trace: &RunTrace) -> f64 {
    (0..trace.paths.len())
        .map(|p| {
            let (a, b) = fairness_sums(trace, p);
            epsilon_hat_of(a, b)
        })
        .reduce(f64::max)
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAudit {
    pub id: String,
    pub received: f64,
    pub lost: f64,
    pub lemma1_slack: f64,
    /// Scale of the throughput inequality: `Σ rcvd + 1`.
    pub lemma1_scale: f64,
    /// `None` when the path never received anything.
    pub lemma3_slack: Option<f64>,
    /// Scale of the loss-fraction inequality: `|T_p| + 1`.
    pub lemma3_scale: f64,
    /// Most received in any single round.
    pub u: f64,
    pub max_sent: f64,
    pub sent_ceiling: f64,
    pub fairness_lhs: f64,
    pub fairness_rhs: f64,
    #[serde(with = "extended_f64")]
    pub epsilon_hat: f64,
    /// Per-path constant of the loss lower bound; `None` for zero-value paths.
    pub c: Option<f64>,
}

impl PathAudit {
    pub fn lemma1_ok(&self) -> bool {
        self.lemma1_slack >= -SLACK_TOLERANCE * self.lemma1_scale
    }

    pub fn lemma3_ok(&self) -> bool {
        self.lemma3_slack
            .is_none_or(|s| s >= -SLACK_TOLERANCE * self.lemma3_scale)
    }

    pub fn ceiling_ok(&self) -> bool {
        self.max_sent <= self.sent_ceiling * (1.0 + 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epsilon: f64,
    pub weighted_throughput: f64,
    pub total_lost_paths: f64,
    pub total_lost_resources: f64,
    pub paths: Vec<PathAudit>,
    #[serde(with = "extended_f64")]
    pub measured_epsilon_hat: f64,
    /// `min_p (β/α − 1)·val(p)`.
    pub b: f64,
    /// `min_p c_p` over paths with positive value.
    #[serde(with = "extended_f64_opt")]
    pub c: Option<f64>,
    /// `max_p (1+δ)·ln(U/f₀) / (ε²·β·val)` with a unit constant.
    pub duration_threshold: f64,
    pub opt_value: Option<f64>,
    pub competitive_ratio: Option<f64>,
    /// `b·c·opt/(1+ε) − Σ (1+δ)·f₀·val/α`; the throughput is at least this
    /// whenever loss was ε-fair.
    pub throughput_lower_bound: Option<f64>,
}

impl AuditReport {
    pub fn lemma1_min_slack(&self) -> f64 {
        self.paths
            .iter()
            .map(|p| p.lemma1_slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lemma3_min_slack(&self) -> f64 {
        self.paths
            .iter()
            .filter_map(|p| p.lemma3_slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lemmas_hold(&self) -> bool {
        self.paths
            .iter()
            .all(|p| p.lemma1_ok() && p.lemma3_ok() && p.ceiling_ok())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `ratio=<x> eps_hat=<y> lemma1_min_slack=<z> lemma3_min_slack=<w>`.
    pub fn summary(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.competitive_ratio {
            Some(r) => write!(f, "ratio={r}")?,
            None => write!(f, "ratio=n/a")?,
        }
        write!(
            f,
            " eps_hat={} lemma1_min_slack={} lemma3_min_slack={}",
            self.measured_epsilon_hat,
            self.lemma1_min_slack(),
            self.lemma3_min_slack()
        )
    }
}

fn path_audit(trace: &RunTrace, p: usize) -> PathAudit {
    let conn = &trace.scenario.connections[p];
    let path = &trace.paths[p];
    let (fa, fb) = fairness_sums(trace, p);
    let u = path.max_received();
    let c = (conn.value > 0.0).then(|| {
        let (a, b) = (conn.alpha, conn.beta);
        let d = f64::from(conn.total_delay);
        let len = conn.duration() as f64;
        a * (1.0 - b) / (b * (1.0 + a) * conn.value) * (1.0 - (1.0 + d) / len)
            - (1.0 - b) / (b * conn.value) * (1.0 + d) / len * growth_log(a, b, u, conn.start_rate)
    });
    PathAudit {
        id: conn.id.clone(),
        received: path.total_received(),
        lost: path.total_lost(),
        lemma1_slack: check_lemma1(trace, p),
        lemma1_scale: path.total_received() + 1.0,
        lemma3_slack: check_lemma3(trace, p),
        lemma3_scale: conn.duration() as f64 + 1.0,
        u,
        max_sent: path.max_sent(),
        sent_ceiling: sent_ceiling(trace, p),
        fairness_lhs: fa,
        fairness_rhs: fb,
        epsilon_hat: epsilon_hat_of(fa, fb),
        c,
    }
}

/// Assembles the report; the ratio and the throughput bound need `opt`.
pub fn build_report(
    trace: &RunTrace,
    opt: Option<&OptimumSolution>,
) -> Result<AuditReport, AuditError> {
    let scenario = &trace.scenario;
    let eps = scenario.epsilon;
    let paths: Vec<PathAudit> = (0..trace.paths.len())
        .map(|p| path_audit(trace, p))
        .collect();
    let weighted_throughput: f64 = scenario
        .connections
        .iter()
        .zip(&trace.paths)
        .map(|(c, p)| c.value * p.total_received())
        .sum();
    let b = scenario
        .connections
        .iter()
        .map(|c| (c.beta / c.alpha - 1.0) * c.value)
        .fold(f64::INFINITY, f64::min);
    let b = if b.is_finite() { b } else { 0.0 };
    let c = paths.iter().filter_map(|p| p.c).reduce(f64::min);
    let duration_threshold = scenario
        .connections
        .iter()
        .zip(&paths)
        .filter(|(c, p)| c.value > 0.0 && p.u > 0.0)
        .map(|(c, p)| {
            (1.0 + f64::from(c.total_delay)) * (p.u / c.start_rate).ln()
                / (eps * eps * c.beta * c.value)
        })
        .fold(0.0f64, f64::max);
    let warmup_cost: f64 = scenario
        .connections
        .iter()
        .map(|c| (1.0 + f64::from(c.total_delay)) * c.start_rate * c.value / c.alpha)
        .sum();

    let (opt_value, competitive_ratio, throughput_lower_bound) = match opt {
        None => (None, None, None),
        Some(sol) => {
            let ratio = if sol.opt_value > 0.0 {
                weighted_throughput / sol.opt_value
            } else if weighted_throughput > 0.0 {
                return Err(AuditError::ZeroOptimum(weighted_throughput));
            } else {
                1.0
            };
            let bound = c.map(|c| b * c * sol.opt_value / (1.0 + eps) - warmup_cost);
            (Some(sol.opt_value), Some(ratio), bound)
        }
    };

    Ok(AuditReport {
        epsilon: eps,
        weighted_throughput,
        total_lost_paths: paths.iter().map(|p| p.lost).sum(),
        total_lost_resources: trace.resources.iter().map(|r| r.total_lost()).sum(),
        measured_epsilon_hat: measure_fairness(trace),
        paths,
        b,
        c,
        duration_threshold,
        opt_value,
        competitive_ratio,
        throughput_lower_bound,
    })
}

/// Full report including the competitive ratio against `opt`.
pub fn competitive_ratio(
    trace: &RunTrace,
    opt: &OptimumSolution,
) -> Result<AuditReport, AuditError> {
    build_report(trace, Some(opt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capacity, ConnectionSpec, LossPolicy, ResourceSpec, Scenario};
    use crate::sim::run;

    fn single(cap: f64, f0: f64, len: u64, delay: u32) -> Scenario {
        Scenario {
            resources: vec![ResourceSpec {
                id: "l".into(),
                capacity: Capacity::constant(cap),
            }],
            connections: vec![ConnectionSpec {
                id: "p".into(),
                route: vec!["l".into()],
                value: 1.0,
                start: 0,
                end: len - 1,
                total_delay: delay,
                hop_delays: vec![0],
                start_rate: f0,
                alpha: 0.01,
                beta: 0.1,
            }],
            epsilon: 0.1,
            loss_policy: LossPolicy::Proportional,
        }
    }

    #[test]
    fn theorem_parameter_examples() {
        let (a, b) = theorem_parameters(0.1, 1.0, 1.0).unwrap();
        assert!((a - 0.01).abs() < 1e-15 && (b - 0.1).abs() < 1e-15);
        let (a, b) = theorem_parameters(0.1, 0.5, 1.0).unwrap();
        assert!((a - 0.005).abs() < 1e-15 && (b - 0.1).abs() < 1e-15);
        for eps in [0.03, 0.2, 0.7] {
            let (a, b) = theorem_parameters(eps, 1.0, 0.5).unwrap();
            assert!((a / b - eps).abs() < 1e-12);
        }
        assert!(theorem_parameters(1.0, 1.0, 1.0).is_err());
        assert!(theorem_parameters(0.1, 0.0, 1.0).is_err());
        assert!(theorem_parameters(0.1, 1.0, 1.5).is_err());
    }

    #[test]
    fn lossless_run_slacks() {
        let s = single(f64::INFINITY, 2.0, 10, 1);
        let tr = run(&s).unwrap();
        let rcvd = tr.paths[0].total_received();
        // L = 0: slack = R + (δ+1)·f₀/α.
        let expected = rcvd + 2.0 * 2.0 / 0.01;
        assert!((check_lemma1(&tr, 0) - expected).abs() < 1e-9);
        assert!(check_lemma3(&tr, 0).unwrap() >= 0.0);
        assert_eq!(measure_fairness(&tr), 0.0);
    }

    #[test]
    fn overload_run_satisfies_both_inequalities() {
        let tr = run(&single(10.0, 20.0, 50, 0)).unwrap();
        assert!(check_lemma1(&tr, 0) >= 0.0);
        assert!(check_lemma3(&tr, 0).unwrap() >= 0.0);
        let report = build_report(&tr, None).unwrap();
        assert!(report.lemmas_hold());
        assert!(report.measured_epsilon_hat <= 1e-9);
    }

    #[test]
    fn warmup_only_connection() {
        // |T| = δ + 1: the linear term vanishes and the log term is
        // non-negative, so the slack is just Σ lsr + log term ≥ 0.
        let tr = run(&single(1.0, 3.0, 3, 2)).unwrap();
        let slack = check_lemma3(&tr, 0).unwrap();
        let lsr: f64 = tr.paths[0].lsr.iter().sum();
        assert!(slack >= lsr - 1e-12);
    }

    #[test]
    fn nothing_received_is_degenerate() {
        let tr = run(&single(0.0, 1.0, 5, 0)).unwrap();
        assert_eq!(check_lemma3(&tr, 0), None);
        assert!(build_report(&tr, None).unwrap().lemmas_hold());
    }

    #[test]
    fn zero_optimum_with_throughput_is_an_error() {
        let tr = run(&single(10.0, 1.0, 5, 0)).unwrap();
        let fake = OptimumSolution {
            rates: Default::default(),
            opt_value: 0.0,
            tight_constraints: vec![],
        };
        assert!(matches!(
            competitive_ratio(&tr, &fake),
            Err(AuditError::ZeroOptimum(_))
        ));
    }

    #[test]
    fn summary_line_format() {
        let tr = run(&single(10.0, 1.0, 5, 0)).unwrap();
        let line = build_report(&tr, None).unwrap().summary();
        assert!(
            line.starts_with("ratio=n/a eps_hat=0 lemma1_min_slack="),
            "{line}"
        );
        assert!(line.contains(" lemma3_min_slack="));
    }
}
