//! Seeded random scenarios for property suites and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Capacity, ConnectionSpec, LossPolicy, ResourceSpec, Scenario};

#[derive(Debug, Clone)]
pub struct RandomScenarioConfig {
    pub max_resources: usize,
    pub max_paths: usize,
    pub max_hops: usize,
    pub max_delay: u32,
    pub max_start: u64,
    pub max_duration: u64,
    /// Chance of an adversarial (rather than proportional) loss policy.
    pub adversarial_share: f64,
}

impl Default for RandomScenarioConfig {
    fn default() -> Self {
        RandomScenarioConfig {
            max_resources: 6,
            max_paths: 8,
            max_hops: 3,
            max_delay: 5,
            max_start: 40,
            max_duration: 300,
            adversarial_share: 0.5,
        }
    }
}

/// A valid scenario drawn from `seed`. Routes visit resources in increasing
/// index order, so same-round hops never conflict.
pub fn random_scenario(seed: u64, cfg: &RandomScenarioConfig) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_res = rng.gen_range(1..=cfg.max_resources);
    let resources = (0..n_res)
        .map(|i| {
            let steps = rng.gen_range(1..=3);
            let mut from = 0;
            let capacity = Capacity::from_steps((0..steps).map(|k| {
                if k > 0 {
                    from += rng.gen_range(1..=cfg.max_duration.max(2) / 2);
                }
                (from, rng.gen_range(2.0..60.0))
            }));
            ResourceSpec {
                id: format!("r{i}"),
                capacity,
            }
        })
        .collect();

    let n_paths = rng.gen_range(1..=cfg.max_paths);
    let connections: Vec<ConnectionSpec> = (0..n_paths)
        .map(|i| {
            let hops = rng.gen_range(1..=cfg.max_hops.min(n_res));
            let mut route: Vec<usize> = rand::seq::index::sample(&mut rng, n_res, hops).into_vec();
            route.sort_unstable();
            let total_delay = rng.gen_range(0..=cfg.max_delay);
            let mut hop_delays: Vec<u32> =
                (0..hops).map(|_| rng.gen_range(0..=total_delay)).collect();
            hop_delays.sort_unstable_by(|a, b| b.cmp(a));
            let beta = rng.gen_range(0.05..0.5);
            let alpha = beta * rng.gen_range(0.05..0.6);
            let start = rng.gen_range(0..=cfg.max_start);
            let duration = rng.gen_range(1..=cfg.max_duration);
            ConnectionSpec {
                id: format!("p{i}"),
                route: route.iter().map(|r| format!("r{r}")).collect(),
                value: rng.gen_range(0.1..=1.0),
                start,
                end: start + duration - 1,
                total_delay,
                hop_delays,
                start_rate: rng.gen_range(0.5..40.0),
                alpha,
                beta,
            }
        })
        .collect();

    let epsilon = rng.gen_range(0.05..0.5);
    let loss_policy = if rng.gen_bool(cfg.adversarial_share) {
        let target_path = if rng.gen_bool(0.5) {
            Some(format!("p{}", rng.gen_range(0..n_paths)))
        } else {
            None
        };
        LossPolicy::AdversarialFair {
            seed: rng.gen(),
            target_path,
        }
    } else {
        LossPolicy::Proportional
    };
    Scenario {
        resources,
        connections,
        epsilon,
        loss_policy,
    }
}
