//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use fluid_observer::dde::{integrate, DelaySystem};
use fluid_observer::fixtures;
use fluid_observer::linearizer::{augment, fd_jacobian, linearize};
use fluid_observer::lmi::{check_certificate, synthesize_gain, verify_gain, GainVerdict, SynthesisOptions};
use fluid_observer::observer::{detect_anomalies, norm_series, ErrorDynamics};
use fluid_observer::pipeline::{cmd_run, model_of, obtain_gain, prepare, simulate, Overrides};
use fluid_observer::plant::{fluid_field, FieldPoint};
use fluid_observer::topology::{
    compute_equilibrium, drop_prob_for_window, validate_config, AnomalySchedule, Closure, NetworkConfig,
    SourceSpec, ValidatedConfig,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond { Ok(detail) } else { Err(detail) }
}

fn within_time(start: Instant, limit: Duration, detail: String) -> Outcome {
    let el = start.elapsed();
    check(el < limit, format!("{detail}; {:.3} s (limit {} s)", el.as_secs_f64(), limit.as_secs()))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(name)
}

fn random_config(rng: &mut ChaCha8Rng, n: usize, closure: Closure) -> ValidatedConfig {
    use rand::Rng;
    let buffer_max = rng.random_range(100.0..1000.0);
    validate_config(NetworkConfig {
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
    })
    .unwrap()
}

fn equilibrium_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let closure = if k % 2 == 0 { Closure::UniformDrop } else { Closure::EqualRate };
        let cfg = random_config(&mut rng, 1 + k % 5, closure);
        let eq = compute_equilibrium(&cfg);
        let load: f64 = cfg.sessions().iter().zip(eq.rates()).map(|(e, x)| e * x).sum();
        worst = worst.max((load - cfg.capacity).abs() / cfg.capacity);
        for s in &eq.sources {
            let p = drop_prob_for_window(s.rate * s.rtt);
            worst = worst.max((s.drop_prob - p).abs() / p);
        }
        // residual relative to the size of the individual terms
        let pt = FieldPoint::at_equilibrium(&eq);
        let field = fluid_field(&cfg, &pt, 0.0);
        for (i, s) in eq.sources.iter().enumerate() {
            let term = s.rate / s.rtt;
            worst = worst.max(field[i].abs() / term);
        }
        worst = worst.max(field[cfg.num_sources()].abs() / cfg.capacity);
    }
    let ok = worst < 1e-8;
    within_time(start, Duration::from_secs(1), format!("max relative residual {worst:.2e}"))
        .and_then(|d| check(ok, d))
}

fn linearization_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for n in [1, 2, 3, 5] {
        for closure in [Closure::UniformDrop, Closure::EqualRate] {
            let cfg = random_config(&mut rng, n, closure);
            let eq = compute_equilibrium(&cfg);
            let lin = linearize(&eq, &cfg);
            let fd = fd_jacobian(&cfg, &eq, 1e-6);
            for (an, num) in [(&lin.a, &fd.a), (&lin.a_d, &fd.a_d), (&lin.b, &fd.b)] {
                let scale = an.amax();
                for (a, f) in an.iter().zip(num.iter()) {
                    worst = worst.max((a - f).abs() / a.abs().max(1e-9 * scale));
                }
            }
        }
    }
    let ok = worst < 1e-5;
    within_time(start, Duration::from_secs(1), format!("max entry-wise relative error {worst:.2e}"))
        .and_then(|d| check(ok, d))
}

fn published_matrices() -> Outcome {
    let cfg = validate_config(fixtures::bottleneck(AnomalySchedule::none())).unwrap();
    let lin = linearize(&compute_equilibrium(&cfg), &cfg);
    let aug = augment(&lin).map_err(|e| e.to_string())?;
    let n = 3;
    let mut worst_small = 0.0f64;
    let mut worst_large = 0.0f64;
    for i in 0..n {
        worst_small = worst_small.max((aug.a_bar[(i, i)] - fixtures::PRINTED_A[i]).abs());
        worst_small = worst_small.max((aug.a_bar[(i, n)] - fixtures::PRINTED_H[i]).abs());
        worst_large = worst_large.max((aug.b_bar[(i, i)] - fixtures::PRINTED_E[i]).abs());
        worst_small = worst_small.max((lin.a_d[(0, i)] - fixtures::PRINTED_F_ETA[0]).abs());
        worst_large = worst_large.max((lin.a_d[(n, i)] - f64::from(fixtures::SESSIONS)).abs());
    }
    check(
        worst_small <= 0.005 && worst_large <= 0.5,
        format!(
            "A diag {:.4?}, h {:.5?}, B diag {:.1?}; max deviation {worst_small:.4} (fractional), {worst_large:.2} (integer-scale)",
            (0..n).map(|i| aug.a_bar[(i, i)]).collect::<Vec<_>>(),
            (0..n).map(|i| aug.a_bar[(i, n)]).collect::<Vec<_>>(),
            (0..n).map(|i| aug.b_bar[(i, i)]).collect::<Vec<_>>(),
        ),
    )
}

struct UnitLag;

impl DelaySystem for UnitLag {
    fn dim(&self) -> usize {
        1
    }
    fn delays(&self) -> &[f64] {
        &[1.0]
    }
    fn history(&self, _t: f64, out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn rhs(&self, _t: f64, _x: &[f64], delayed: &[Vec<f64>], dx: &mut [f64]) {
        dx[0] = -delayed[0][0];
    }
}

/// Method of steps for `x' = −x(t−1)` with unit history; piece `k` holds
/// polynomial coefficients in `t − k`.
fn lag_solution(t: f64) -> f64 {
    let mut piece = vec![1.0, -1.0];
    let k = t.floor() as usize;
    for _ in 0..k {
        let start: f64 = piece.iter().sum();
        let mut next = vec![start];
        next.extend(piece.iter().enumerate().map(|(j, c)| -c / (j as f64 + 1.0)));
        piece = next;
    }
    let s = t - k as f64;
    piece.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

fn max_lag_error(horizon: f64, h: f64) -> f64 {
    let tr = integrate(&UnitLag, horizon, h).unwrap();
    (0..tr.len())
        .map(|k| (tr.state(k)[0] - lag_solution(tr.time(k))).abs())
        .fold(0.0, f64::max)
}

fn integrator_oracle() -> Outcome {
    let start = Instant::now();
    let err = max_lag_error(3.0, 1e-3);
    let (coarse, fine) = (max_lag_error(10.0, 0.1), max_lag_error(10.0, 0.05));
    let ratio = coarse / fine;
    let ok = err < 1e-6 && ratio >= 8.0;
    within_time(
        start,
        Duration::from_secs(1),
        format!("max error {err:.2e} on [0,3]; error ratio {ratio:.1} when halving h on [0,10]"),
    )
    .and_then(|d| check(ok, d))
}

fn synthesis_and_convergence() -> Outcome {
    let start = Instant::now();
    let sc = prepare(&scenario("bottleneck_bursts.toml"), &Overrides::default()).map_err(|e| e.to_string())?;
    let (_, _, aug) = model_of(&sc).map_err(|e| e.to_string())?;
    let res = synthesize_gain(&aug, &sc.scenario.observer.synthesis()).map_err(|e| e.to_string())?;
    let report = check_certificate(&aug, &res);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let e0: Vec<f64> = (0..aug.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let tr = integrate(&ErrorDynamics::new(&aug, &res.gain, &e0), 20.0, 1e-3).map_err(|e| e.to_string())?;
        let norms = norm_series(&tr);
        worst = worst.max(norms.last().unwrap() / norms[0]);
    }
    let ok = report.passed && worst < 0.01;
    within_time(
        start,
        Duration::from_secs(30),
        format!(
            "status {:?}, certificate check {}, worst |e(20)|/|e(0)| = {worst:.3} (needs < 0.01)",
            res.status,
            if report.passed { "passed" } else { "failed" }
        ),
    )
    .and_then(|d| check(ok, d))
}

fn published_gain_certified() -> Outcome {
    let model = fixtures::printed_model();
    let gain = fixtures::printed_gain();
    let mut opts = SynthesisOptions::default();
    for attempt in 0..2 {
        match verify_gain(&model, &gain, &opts).map_err(|e| e.to_string())? {
            GainVerdict::Certified(r) => {
                return Ok(format!("certified at epsilon {:e}, margin {:.2e}", opts.epsilon, r.margin));
            }
            GainVerdict::Inconclusive { upper_bound } if attempt == 1 => {
                return Err(format!("inconclusive at epsilon {:e} (bound {upper_bound:.2e})", opts.epsilon));
            }
            GainVerdict::Inconclusive { .. } => opts.epsilon /= 10.0,
        }
    }
    unreachable!()
}

fn anomaly_scenario() -> Outcome {
    let start = Instant::now();
    let sc = prepare(&scenario("bottleneck_bursts.toml"), &Overrides::default()).map_err(|e| e.to_string())?;
    let (_, _, aug) = model_of(&sc).map_err(|e| e.to_string())?;
    let res = obtain_gain(&sc, &aug).map_err(|e| e.to_string())?;
    let trace = simulate(&sc, &res.gain).map_err(|e| e.to_string())?;
    let times = trace.times();
    let dhat = trace.anomaly_estimate();
    let hold = sc.scenario.observer.hold;
    let report = detect_anomalies(&times, &dhat, sc.threshold(), hold);
    let elapsed = start.elapsed();

    let bursts = &sc.network.anomaly.intervals;
    let mut problems = Vec::new();
    if report.alarms.len() != bursts.len() {
        problems.push(format!("{} alarms", report.alarms.len()));
    }
    let mut means = Vec::new();
    for b in bursts {
        match report.alarms.iter().find(|a| a.onset >= b.start - hold && a.onset <= b.end + hold) {
            Some(a) if (a.onset - b.start).abs() <= 3.0 => {}
            Some(a) => problems.push(format!("onset {:.2} for burst at {}", a.onset, b.start)),
            None => problems.push(format!("no alarm for burst at {}", b.start)),
        }
        let window: Vec<f64> = times
            .iter()
            .zip(&dhat)
            .filter(|(t, _)| **t >= b.end - 10.0 && **t < b.end)
            .map(|(_, d)| *d)
            .collect();
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        if (mean - b.rate).abs() > 0.1 * b.rate {
            problems.push(format!("mean dhat {mean:.0} in final 10 s of burst at {}", b.start));
        }
        means.push(mean);
    }
    let outside = report
        .alarms
        .iter()
        .filter(|a| !bursts.iter().any(|b| a.onset < b.end + hold && a.clear > b.start - hold))
        .count();
    if outside > 0 {
        problems.push(format!("{outside} alarms outside bursts"));
    }
    if elapsed > Duration::from_secs(60) {
        problems.push(format!("runtime {:.1} s", elapsed.as_secs_f64()));
    }
    let onsets: Vec<String> = report.alarms.iter().map(|a| format!("{:.2}", a.onset)).collect();
    let clears: Vec<String> = report.alarms.iter().map(|a| format!("{:.2}", a.clear)).collect();
    let detail = format!(
        "{} alarms, onsets [{}], clears [{}], final-10 s mean dhat {:.0?} vs {}; {:.2} s",
        report.alarms.len(),
        onsets.join(", "),
        clears.join(", "),
        means,
        fixtures::BURST_RATE,
        elapsed.as_secs_f64()
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing: {}", problems.join("; ")))
    }
}

fn regulation_without_anomaly() -> Outcome {
    let sc = prepare(&scenario("quiet.toml"), &Overrides::default()).map_err(|e| e.to_string())?;
    if !sc.network.anomaly.is_quiet() {
        return Err("scenario has anomalous traffic".into());
    }
    let (_, _, aug) = model_of(&sc).map_err(|e| e.to_string())?;
    let res = obtain_gain(&sc, &aug).map_err(|e| e.to_string())?;
    let trace = simulate(&sc, &res.gain).map_err(|e| e.to_string())?;
    let times = trace.times();
    let horizon = *times.last().unwrap();
    let queue = trace.queue();
    let tail: Vec<f64> = times
        .iter()
        .zip(&queue)
        .filter(|(t, _)| **t >= horizon - 100.0)
        .map(|(_, b)| *b)
        .collect();
    let mean_queue = tail.iter().sum::<f64>() / tail.len() as f64;
    let b0 = sc.network.queue_target;
    let mut worst = 0.0f64;
    for i in 0..sc.network.num_sources() {
        let (x, xhat) = (trace.rate(i), trace.rate_estimate(i));
        for k in (0..times.len()).filter(|k| times[*k] >= 30.0) {
            worst = worst.max((xhat[k] - x[k]).abs() / x[k]);
        }
    }
    check(
        (mean_queue - b0).abs() <= 0.2 * b0 && worst <= 0.02,
        format!(
            "mean queue over final 100 s {mean_queue:.2} (target {b0}); max rate estimate error after 30 s {:.3}%",
            100.0 * worst
        ),
    )
}

fn determinism() -> Outcome {
    let sc = prepare(&scenario("bottleneck_bursts.toml"), &Overrides::default()).map_err(|e| e.to_string())?;
    let (_, a) = cmd_run(&sc).map_err(|e| e.to_string())?;
    let (_, b) = cmd_run(&sc).map_err(|e| e.to_string())?;
    let names: Vec<&str> = a.names().filter(|n| n.ends_with(".csv")).collect();
    let same = names.iter().all(|n| a.get(n) == b.get(n));
    let bytes = a.get("trace.csv").map_or(0, str::len);
    check(
        same && bytes > 0,
        format!("{} CSV files compared, trace.csv {bytes} bytes", names.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("equilibrium identities", equilibrium_identities),
        ("linearization against finite differences", linearization_oracle),
        ("published coefficient tables", published_matrices),
        ("delay integrator against method of steps", integrator_oracle),
        ("gain synthesis and 20 s error convergence", synthesis_and_convergence),
        ("published gain certified", published_gain_certified),
        ("three-burst anomaly scenario", anomaly_scenario),
        ("queue regulation and rate tracking without anomaly", regulation_without_anomaly),
        ("byte-identical reruns", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("criterion {}: PASS  {name}: {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {d}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
