mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fluid_observer::plant::{fluid_field, FieldPoint};
use fluid_observer::topology::{
    compute_equilibrium, drop_prob_for_window, validate_config, Closure, ConfigError, NetworkConfig,
    SourceSpec,
};

use common::{max_abs, random_config};

#[test]
fn random_configs_satisfy_equilibrium_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..200 {
        let closure = if k % 2 == 0 { Closure::UniformDrop } else { Closure::EqualRate };
        let cfg = random_config(&mut rng, 1 + k % 6, closure);
        let eq = compute_equilibrium(&cfg);
        let load: f64 = cfg.sessions().iter().zip(eq.rates()).map(|(e, x)| e * x).sum();
        assert!((load - cfg.capacity).abs() <= 1e-10 * cfg.capacity);
        for (s, src) in eq.sources.iter().zip(cfg.sources()) {
            assert!((s.rtt - src.propagation() - cfg.queue_target / cfg.capacity).abs() < 1e-14);
            assert!((s.drop_prob - drop_prob_for_window(s.rate * s.rtt)).abs() <= 1e-12 * s.drop_prob);
            assert!(s.drop_prob > 0.0 && s.drop_prob < 1.0);
        }
        let field = fluid_field(&cfg, &FieldPoint::at_equilibrium(&eq), 0.0);
        let scale = max_abs(eq.rates()) / eq.sources[0].rtt.powi(2) + cfg.capacity;
        assert!(max_abs(field) <= 1e-9 * scale);
    }
}

#[test]
fn scaling_sessions_and_capacity_keeps_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for closure in [Closure::UniformDrop, Closure::EqualRate] {
        let cfg = random_config(&mut rng, 4, closure);
        let mut scaled = cfg.get().clone();
        for s in &mut scaled.sources {
            s.sessions *= 3;
        }
        scaled.capacity *= 3.0;
        // queueing delay b0/c must not change either
        scaled.queue_target *= 3.0;
        scaled.buffer_max *= 3.0;
        let scaled = validate_config(scaled).unwrap();
        let (a, b) = (compute_equilibrium(&cfg), compute_equilibrium(&scaled));
        for (x, y) in a.rates().iter().zip(b.rates()) {
            assert!((x - y).abs() <= 1e-12 * x);
        }
    }
}

#[test]
fn scaling_sessions_alone_divides_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for closure in [Closure::UniformDrop, Closure::EqualRate] {
        let cfg = random_config(&mut rng, 3, closure);
        for k in [2u32, 7] {
            let mut scaled = cfg.get().clone();
            for s in &mut scaled.sources {
                s.sessions *= k;
            }
            let scaled = validate_config(scaled).unwrap();
            let (a, b) = (compute_equilibrium(&cfg), compute_equilibrium(&scaled));
            for (x, y) in a.rates().iter().zip(b.rates()) {
                assert!((x / f64::from(k) - y).abs() <= 1e-12 * x);
            }
        }
    }
}

#[test]
fn equal_rate_closure_shares_capacity_per_connection() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = random_config(&mut rng, 5, Closure::EqualRate);
    let eq = compute_equilibrium(&cfg);
    let total: f64 = cfg.sessions().iter().sum();
    for x in eq.rates() {
        assert!((x - cfg.capacity / total).abs() <= 1e-12 * x);
    }
}

#[test]
fn uniform_drop_closure_equalises_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = random_config(&mut rng, 5, Closure::UniformDrop);
    let eq = compute_equilibrium(&cfg);
    let p0 = eq.sources[0].drop_prob;
    for s in &eq.sources {
        assert!((s.drop_prob - p0).abs() <= 1e-12 * p0);
    }
}

#[test]
fn sources_are_sorted_by_round_trip() {
    let cfg = NetworkConfig {
        capacity: 1000.0,
        buffer_max: 300.0,
        queue_target: 50.0,
        sources: vec![SourceSpec::new(2, 0.2, 0.2), SourceSpec::new(3, 0.05, 0.05)],
        anomaly: Default::default(),
        closure: Closure::UniformDrop,
    };
    let v = validate_config(cfg).unwrap();
    assert_eq!(v.sources()[0].sessions, 3);
}

#[test]
fn rejects_invalid_configs() {
    let good = NetworkConfig {
        capacity: 1000.0,
        buffer_max: 300.0,
        queue_target: 50.0,
        sources: vec![SourceSpec::new(2, 0.1, 0.1)],
        anomaly: Default::default(),
        closure: Closure::UniformDrop,
    };
    let mut c = good.clone();
    c.sources.clear();
    assert_eq!(validate_config(c), Err(ConfigError::NoSources));
    let mut c = good.clone();
    c.sources[0].fwd_prop = -0.1;
    assert_eq!(validate_config(c), Err(ConfigError::NegativeDelay { index: 0 }));
    let mut c = good.clone();
    c.sources[0] = SourceSpec::new(2, 0.0, 0.0);
    assert_eq!(validate_config(c), Err(ConfigError::ZeroPropagation { index: 0 }));
    let mut c = good;
    c.capacity = f64::NAN;
    assert_eq!(validate_config(c), Err(ConfigError::NonFinite("capacity")));
}
