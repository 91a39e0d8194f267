//! Scenario description: resources with capacity timelines, connections
//! (paths) with their delays and protocol parameters, and the loss policy.
//!
//! A [`Scenario`] is immutable once built and can be shared read-only across
//! concurrent runs. [`validate`] reports every invariant violation as data;
//! the simulator and the optimum solver refuse scenarios that do not validate.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Round index. Round 0 is the first simulated round.
pub type Round = u64;

/// One step of a piecewise-constant capacity timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityStep {
    pub from_round: Round,
    #[serde(with = "crate::num::extended_f64")]
    pub value: f64,
}

/// Piecewise-constant capacity. The last step extends to every later round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Capacity {
    pub steps: Vec<CapacityStep>,
}

impl Capacity {
    pub fn constant(value: f64) -> Self {
        Capacity {
            steps: vec![CapacityStep {
                from_round: 0,
                value,
            }],
        }
    }

    pub fn from_steps(steps: impl IntoIterator<Item = (Round, f64)>) -> Self {
        Capacity {
            steps: steps
                .into_iter()
                .map(|(from_round, value)| CapacityStep { from_round, value })
                .collect(),
        }
    }

    /// Capacity in round `t`. Rounds before the first step read as zero,
    /// which only happens on timelines that fail validation.
    pub fn at(&self, t: Round) -> f64 {
        let idx = self.steps.partition_point(|s| s.from_round <= t);
        if idx == 0 {
            0.0
        } else {
            self.steps[idx - 1].value
        }
    }

    /// Rounds at which the capacity may change value.
    pub fn breakpoints(&self) -> impl Iterator<Item = Round> + '_ {
        self.steps.iter().map(|s| s.from_round)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Capacity {
            steps: self
                .steps
                .iter()
                .map(|s| CapacityStep {
                    from_round: s.from_round,
                    value: s.value * k,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub id: String,
    pub capacity: Capacity,
}

/// A connection, identified with the fixed route its packets follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    pub id: String,
    /// Resource ids in the order packets traverse them.
    pub route: Vec<String>,
    /// Value of each delivered packet, in `[0, 1]`.
    pub value: f64,
    /// First active round (inclusive).
    pub start: Round,
    /// Last active round (inclusive).
    pub end: Round,
    /// Rounds from injection at the source to arrival at the destination.
    pub total_delay: u32,
    /// For each hop of `route`, rounds remaining to the destination after
    /// leaving that resource.
    pub hop_delays: Vec<u32>,
    pub start_rate: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ConnectionSpec {
    /// Number of active rounds, `|T_p|`.
    pub fn duration(&self) -> u64 {
        self.end.saturating_sub(self.start) + 1
    }

    pub fn is_active(&self, t: Round) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn window(&self) -> RoundWindow {
        RoundWindow::shifted(self)
    }

    /// Rounds from the source to hop `hop` of the route.
    pub fn pre_delay_at(&self, hop: usize) -> u32 {
        self.total_delay.saturating_sub(self.hop_delays[hop])
    }

    /// Rounds from the source to resource `resource`.
    pub fn pre_delay(&self, resource: &str) -> Result<u32, ModelError> {
        let hop = self
            .route
            .iter()
            .position(|r| r == resource)
            .ok_or_else(|| ModelError::NotOnRoute {
                connection: self.id.clone(),
                resource: resource.to_string(),
            })?;
        Ok(self.pre_delay_at(hop))
    }

    /// Last round in which this connection's packets may still be in flight.
    pub fn drain_round(&self) -> Round {
        self.end + u64::from(self.total_delay)
    }
}

/// Free function form of [`ConnectionSpec::pre_delay`].
pub fn pre_delay(conn: &ConnectionSpec, resource: &str) -> Result<u32, ModelError> {
    conn.pre_delay(resource)
}

/// `T'_p`: the active window shifted by the path's total delay. Receipts
/// and losses of the connection are recorded exactly on these rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundWindow {
    pub first: Round,
    pub last: Round,
}

impl RoundWindow {
    pub fn shifted(conn: &ConnectionSpec) -> Self {
        let d = u64::from(conn.total_delay);
        RoundWindow {
            first: conn.start + d,
            last: conn.end + d,
        }
    }

    pub fn len(&self) -> u64 {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: Round) -> bool {
        self.first <= t && t <= self.last
    }

    pub fn rounds(&self) -> std::ops::RangeInclusive<Round> {
        self.first..=self.last
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossPolicy {
    /// Every cohort at a congested resource loses the same fraction.
    #[default]
    Proportional,
    /// Loss is pushed onto one path as far as the per-path fairness budget
    /// allows. Without a target, the victim is drawn per event from `seed`.
    AdversarialFair {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_path: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub resources: Vec<ResourceSpec>,
    pub connections: Vec<ConnectionSpec>,
    pub epsilon: f64,
    #[serde(default)]
    pub loss_policy: LossPolicy,
}

impl Scenario {
    /// Last simulated round: every in-flight cohort has resolved by then.
    /// `None` when there are no connections.
    pub fn horizon(&self) -> Option<Round> {
        self.connections
            .iter()
            .map(ConnectionSpec::drain_round)
            .max()
    }

    pub fn resource_index(&self) -> HashMap<&str, usize> {
        self.resources
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    }

    pub fn connection(&self, id: &str) -> Option<&ConnectionSpec> {
        self.connections.iter().find(|c| c.id == id)
    }

    /// Routes as resource indices. Call only on validated scenarios.
    pub(crate) fn indexed_routes(&self) -> Vec<Vec<usize>> {
        let index = self.resource_index();
        self.connections
            .iter()
            .map(|c| c.route.iter().map(|r| index[r.as_str()]).collect())
            .collect()
    }

    /// Resource indices ordered so that whenever a path crosses two resources
    /// in the same round, the earlier hop comes first. `None` if those
    /// same-round orderings form a cycle.
    pub(crate) fn same_round_order(&self) -> Option<Vec<usize>> {
        let index = self.resource_index();
        let n = self.resources.len();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for c in &self.connections {
            for k in 1..c.route.len().min(c.hop_delays.len()) {
                if c.hop_delays[k - 1] != c.hop_delays[k] {
                    continue;
                }
                let (Some(&a), Some(&b)) = (
                    index.get(c.route[k - 1].as_str()),
                    index.get(c.route[k].as_str()),
                ) else {
                    continue;
                };
                succ[a].push(b);
                indeg[b] += 1;
            }
        }
        // Kahn's algorithm, lowest index first so the order is canonical.
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &j in &succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Same scenario with every capacity multiplied by `k`.
    pub fn with_scaled_capacities(&self, k: f64) -> Self {
        let mut s = self.clone();
        for r in &mut s.resources {
            r.capacity = r.capacity.scaled(k);
        }
        s
    }

    /// Stretch time by an integer factor: active windows and capacity steps
    /// start `k` times later and last `k` times longer. Delays are kept.
    pub fn with_stretched_time(&self, k: u64) -> Self {
        let k = k.max(1);
        let mut s = self.clone();
        for c in &mut s.connections {
            let len = c.duration() * k;
            c.start *= k;
            c.end = c.start + len - 1;
        }
        for r in &mut s.resources {
            for step in &mut r.capacity.steps {
                step.from_round *= k;
            }
        }
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ModelError::Parse {
                line: inner.line(),
                column: inner.column(),
                field: path,
                message: inner.to_string(),
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// What the violation is about, e.g. `connection 'a'`.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Collects every invariant violation in the scenario. An empty list means
/// the scenario is valid.
pub fn validate(scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: String, message: String| out.push(Violation { subject, message });

    if !(scenario.epsilon > 0.0 && scenario.epsilon < 1.0) {
        push(
            "scenario".into(),
            format!("epsilon must be in (0,1), got {}", scenario.epsilon),
        );
    }

    let mut resource_ids = HashSet::new();
    for r in &scenario.resources {
        let subject = format!("resource '{}'", r.id);
        if !resource_ids.insert(r.id.as_str()) {
            push(subject.clone(), "duplicate resource id".into());
        }
        let steps = &r.capacity.steps;
        match steps.first() {
            None => push(subject.clone(), "capacity timeline is empty".into()),
            Some(first) if first.from_round != 0 => push(
                subject.clone(),
                "capacity timeline must start at round 0".into(),
            ),
            _ => {}
        }
        if steps.windows(2).any(|w| w[0].from_round >= w[1].from_round) {
            push(
                subject.clone(),
                "capacity steps must have strictly increasing from_round".into(),
            );
        }
        for s in steps {
            if s.value.is_nan() || s.value < 0.0 {
                push(
                    subject.clone(),
                    format!(
                        "capacity must be non-negative, got {} at round {}",
                        s.value, s.from_round
                    ),
                );
            }
        }
    }

    let mut conn_ids = HashSet::new();
    for c in &scenario.connections {
        let subject = format!("connection '{}'", c.id);
        if !conn_ids.insert(c.id.as_str()) {
            push(subject.clone(), "duplicate connection id".into());
        }
        if c.route.is_empty() {
            push(subject.clone(), "route is empty".into());
        }
        let mut seen = HashSet::new();
        for r in &c.route {
            if !resource_ids.contains(r.as_str()) {
                push(
                    subject.clone(),
                    format!("route references unknown resource '{r}'"),
                );
            }
            if !seen.insert(r.as_str()) {
                push(
                    subject.clone(),
                    format!("route visits resource '{r}' twice"),
                );
            }
        }
        if c.hop_delays.len() != c.route.len() {
            push(
                subject.clone(),
                format!(
                    "hop_delays has {} entries but route has {} hops",
                    c.hop_delays.len(),
                    c.route.len()
                ),
            );
        }
        if !(0.0..=1.0).contains(&c.value) {
            push(
                subject.clone(),
                format!("value must be in [0,1], got {}", c.value),
            );
        }
        if c.end < c.start {
            push(
                subject.clone(),
                "active interval is empty (end < start)".into(),
            );
        }
        if !(c.start_rate > 0.0 && c.start_rate.is_finite()) {
            push(
                subject.clone(),
                format!(
                    "start_rate must be positive and finite, got {}",
                    c.start_rate
                ),
            );
        }
        if !(c.alpha > 0.0 && c.alpha.is_finite()) {
            push(
                subject.clone(),
                format!("alpha must be positive, got {}", c.alpha),
            );
        }
        if !(c.beta > 0.0 && c.beta < 1.0) {
            push(
                subject.clone(),
                format!("beta must be in (0,1), got {}", c.beta),
            );
        }
        if c.alpha >= c.beta {
            push(
                subject.clone(),
                format!("alpha must be < beta (alpha={}, beta={})", c.alpha, c.beta),
            );
        }
        if let Some(&max_hop) = c.hop_delays.iter().max() {
            if max_hop > c.total_delay {
                push(
                    subject.clone(),
                    format!(
                        "delay bound: total_delay {} is less than hop delay {}",
                        c.total_delay, max_hop
                    ),
                );
            }
        }
        if c.hop_delays.windows(2).any(|w| w[1] > w[0]) {
            push(
                subject.clone(),
                "hop delays must be non-increasing along the route".into(),
            );
        }
    }

    if let LossPolicy::AdversarialFair {
        target_path: Some(target),
        ..
    } = &scenario.loss_policy
    {
        if !conn_ids.contains(target.as_str()) {
            push(
                "loss_policy".into(),
                format!("target_path '{target}' is not a connection"),
            );
        }
    }

    if out.is_empty() && scenario.same_round_order().is_none() {
        out.push(Violation {
            subject: "scenario".into(),
            message: "routes cross resources in the same round in conflicting orders".into(),
        });
    }
    out
}

/// Fails with every violation if the scenario is invalid.
pub fn ensure_valid(scenario: &Scenario) -> Result<(), ModelError> {
    let violations = validate(scenario);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ModelError::Invalid(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn single_link() -> Scenario {
        Scenario {
            resources: vec![ResourceSpec {
                id: "link".into(),
                capacity: Capacity::constant(10.0),
            }],
            connections: vec![ConnectionSpec {
                id: "p".into(),
                route: vec!["link".into()],
                value: 1.0,
                start: 0,
                end: 9,
                total_delay: 0,
                hop_delays: vec![0],
                start_rate: 1.0,
                alpha: 0.01,
                beta: 0.1,
            }],
            epsilon: 0.1,
            loss_policy: LossPolicy::Proportional,
        }
    }

    fn three_hop() -> ConnectionSpec {
        ConnectionSpec {
            id: "q".into(),
            route: vec!["a".into(), "b".into(), "c".into()],
            value: 1.0,
            start: 0,
            end: 9,
            total_delay: 4,
            hop_delays: vec![4, 2, 0],
            start_rate: 1.0,
            alpha: 0.01,
            beta: 0.1,
        }
    }

    #[test]
    fn valid_single_link_has_no_violations() {
        assert!(validate(&single_link()).is_empty());
    }

    #[test]
    fn alpha_equal_beta_is_rejected() {
        let mut s = single_link();
        s.connections[0].alpha = 0.1;
        let v = validate(&s);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("alpha must be < beta"));
        assert_eq!(v[0].subject, "connection 'p'");
    }

    #[test]
    fn hop_delay_above_total_is_rejected() {
        let mut s = single_link();
        s.connections[0].total_delay = 2;
        s.connections[0].hop_delays = vec![3];
        let v = validate(&s);
        assert!(v.iter().any(|v| v.message.contains("delay bound")), "{v:?}");
    }

    #[test]
    fn validation_reports_all_problems() {
        let mut s = single_link();
        s.epsilon = 1.5;
        s.connections[0].value = 2.0;
        s.connections[0].route.push("missing".into());
        s.resources[0].capacity = Capacity::from_steps([(3, 1.0)]);
        let v = validate(&s);
        let text: Vec<String> = v.iter().map(ToString::to_string).collect();
        assert!(text.iter().any(|m| m.contains("epsilon")));
        assert!(text.iter().any(|m| m.contains("value must be")));
        assert!(text
            .iter()
            .any(|m| m.contains("unknown resource 'missing'")));
        assert!(text.iter().any(|m| m.contains("hop_delays has 1")));
        assert!(text.iter().any(|m| m.contains("start at round 0")));
    }

    #[test]
    fn validate_is_idempotent() {
        let mut s = single_link();
        s.connections[0].beta = 1.0;
        assert_eq!(validate(&s), validate(&s));
    }

    #[test]
    fn non_monotone_pre_delay_is_rejected() {
        let mut c = three_hop();
        c.hop_delays = vec![2, 4, 0];
        let s = Scenario {
            resources: ["a", "b", "c"]
                .iter()
                .map(|id| ResourceSpec {
                    id: (*id).into(),
                    capacity: Capacity::constant(1.0),
                })
                .collect(),
            connections: vec![c],
            epsilon: 0.1,
            loss_policy: LossPolicy::Proportional,
        };
        assert!(validate(&s)
            .iter()
            .any(|v| v.message.contains("non-increasing")));
    }

    #[test]
    fn crossing_same_round_routes_are_rejected() {
        let mut s = single_link();
        s.resources.push(ResourceSpec {
            id: "other".into(),
            capacity: Capacity::constant(5.0),
        });
        let mut a = s.connections[0].clone();
        a.route = vec!["link".into(), "other".into()];
        a.hop_delays = vec![0, 0];
        let mut b = a.clone();
        b.id = "b".into();
        b.route.reverse();
        s.connections = vec![a.clone(), b];
        assert!(validate(&s)
            .iter()
            .any(|v| v.message.contains("conflicting orders")));

        // One-directional sharing is fine.
        let mut c = a.clone();
        c.id = "c".into();
        s.connections = vec![a, c];
        assert!(validate(&s).is_empty());
    }

    #[test]
    fn pre_delay_examples() {
        let c = three_hop();
        assert_eq!(c.pre_delay("a").unwrap(), 0);
        assert_eq!(c.pre_delay("c").unwrap(), 4);
        let all: Vec<u32> = (0..3).map(|k| c.pre_delay_at(k)).collect();
        assert_eq!(all, vec![0, 2, 4]);
        assert!(matches!(
            pre_delay(&c, "zzz"),
            Err(ModelError::NotOnRoute { .. })
        ));
    }

    #[test]
    fn capacity_steps_are_piecewise_constant() {
        let cap = Capacity::from_steps([(0, 5.0), (10, 7.0), (20, f64::INFINITY)]);
        assert_eq!(cap.at(0), 5.0);
        assert_eq!(cap.at(9), 5.0);
        assert_eq!(cap.at(10), 7.0);
        assert_eq!(cap.at(1_000_000), f64::INFINITY);
    }

    #[test]
    fn shifted_window_has_same_length() {
        let c = three_hop();
        let w = c.window();
        assert_eq!(w.first, 4);
        assert_eq!(w.last, 13);
        assert_eq!(w.len(), c.duration());
    }

    #[test]
    fn horizon_covers_drain() {
        let mut s = single_link();
        s.connections[0].total_delay = 3;
        s.connections[0].hop_delays = vec![1];
        assert_eq!(s.horizon(), Some(12));
        s.connections.clear();
        assert_eq!(s.horizon(), None);
    }

    #[test]
    fn json_parse_reports_field_path() {
        let text = r#"{"resources": [{"id": "l", "capacity": [{"from_round": 0, "value": "ten"}]}],
                       "connections": [], "epsilon": 0.1}"#;
        match Scenario::from_json(text) {
            Err(ModelError::Parse { field, line, .. }) => {
                assert!(field.contains("resources[0].capacity[0].value"), "{field}");
                assert_eq!(line, 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn json_accepts_infinite_capacity_and_policy_forms() {
        let text = r#"{
            "resources": [{"id": "l", "capacity": [{"from_round": 0, "value": "inf"}]}],
            "connections": [],
            "epsilon": 0.2,
            "loss_policy": {"adversarial_fair": {"seed": 9, "target_path": "x"}}
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert!(s.resources[0].capacity.at(5).is_infinite());
        assert_eq!(
            s.loss_policy,
            LossPolicy::AdversarialFair {
                seed: 9,
                target_path: Some("x".into())
            }
        );
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }
}
