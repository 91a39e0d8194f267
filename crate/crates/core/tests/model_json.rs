mod common;

use common::{conn, link, scenario};
use mimd_core::model::{Capacity, LossPolicy, Scenario};
use mimd_core::random::{random_scenario, RandomScenarioConfig};
use mimd_core::{validate, ModelError};
use proptest::prelude::*;

proptest! {
    #[test]
    fn scenarios_survive_json(seed in any::<u64>()) {
        let s = random_scenario(seed, &RandomScenarioConfig::default());
        let back = Scenario::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn minimal_file_parses_with_defaults() {
    let text = r#"{
        "resources": [{"id": "l", "capacity": [{"from_round": 0, "value": 10}]}],
        "connections": [{
            "id": "p", "route": ["l"], "value": 1, "start": 0, "end": 9,
            "total_delay": 0, "hop_delays": [0],
            "start_rate": 1, "alpha": 0.01, "beta": 0.1
        }],
        "epsilon": 0.1
    }"#;
    let s = Scenario::from_json(text).unwrap();
    assert_eq!(s.loss_policy, LossPolicy::Proportional);
    assert_eq!(s.resources[0].capacity, Capacity::constant(10.0));
    assert!(validate(&s).is_empty());
}

#[test]
fn infinite_capacity_is_written_as_inf() {
    let s = scenario(
        vec![link("l", f64::INFINITY)],
        vec![conn("p", &["l"], 0, 3, 0)],
        0.1,
    );
    let text = s.to_json();
    assert!(text.contains("\"inf\""), "{text}");
    assert_eq!(Scenario::from_json(&text).unwrap(), s);
}

#[test]
fn adversarial_policy_spelling() {
    let mut s = scenario(vec![link("l", 1.0)], vec![conn("p", &["l"], 0, 3, 0)], 0.1);
    s.loss_policy = LossPolicy::AdversarialFair {
        seed: 9,
        target_path: Some("p".into()),
    };
    let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
    assert_eq!(v["loss_policy"]["adversarial_fair"]["seed"], 9);
    assert_eq!(v["loss_policy"]["adversarial_fair"]["target_path"], "p");
}

#[test]
fn parse_error_names_the_field() {
    let text = r#"{"resources": [], "connections": [{"id": "p", "route": "l"}], "epsilon": 0.1}"#;
    match Scenario::from_json(text) {
        Err(ModelError::Parse { field, line, .. }) => {
            assert_eq!(field, "connections[0].route");
            assert_eq!(line, 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_violation_is_reported() {
    let mut bad = conn("p", &["l", "ghost"], 5, 2, 1);
    bad.alpha = 0.2;
    bad.beta = 0.1;
    bad.value = 1.5;
    let s = scenario(vec![link("l", -1.0)], vec![bad], 0.1);
    let messages: Vec<String> = validate(&s).iter().map(|v| v.to_string()).collect();
    let all = messages.join("\n");
    for needle in ["alpha must be < beta", "ghost", "value", "start"] {
        assert!(all.contains(needle), "missing {needle:?} in\n{all}");
    }
    assert!(messages.len() >= 4, "{all}");
}

#[test]
fn conflicting_same_round_orders_are_rejected() {
    // x crosses u then v in the same round, y crosses v then u.
    let mut x = conn("x", &["u", "v"], 0, 9, 0);
    x.hop_delays = vec![0, 0];
    let mut y = conn("y", &["v", "u"], 0, 9, 0);
    y.hop_delays = vec![0, 0];
    let s = scenario(vec![link("u", 5.0), link("v", 5.0)], vec![x, y], 0.1);
    let all: Vec<String> = validate(&s).iter().map(|v| v.to_string()).collect();
    assert!(
        all.iter().any(|m| m.contains("conflicting orders")),
        "{all:?}"
    );
}
