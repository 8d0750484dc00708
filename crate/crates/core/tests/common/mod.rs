#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use fluid_observer::topology::{
    validate_config, AnomalySchedule, Closure, NetworkConfig, SourceSpec, ValidatedConfig,
};

/// A random valid bottleneck with `n` sources.
pub fn random_config(rng: &mut ChaCha8Rng, n: usize, closure: Closure) -> ValidatedConfig {
    let buffer_max = rng.random_range(100.0..1000.0);
    let cfg = NetworkConfig {
        capacity: rng.random_range(200.0..10_000.0),
        buffer_max,
        queue_target: rng.random_range(0.05..0.9) * buffer_max,
        sources: (0..n)
            .map(|_| {
                SourceSpec::new(
                    rng.random_range(1..50),
                    rng.random_range(0.005..0.2),
                    rng.random_range(0.005..0.6),
                )
            })
            .collect(),
        anomaly: AnomalySchedule::none(),
        closure,
    };
    validate_config(cfg).expect("generated config is valid")
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
