//! Single-bottleneck topology and the TCP/AQM operating point.
//!
//! All rates are packets/second, delays seconds, queue lengths packets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One TCP source (a group of `sessions` identical long-lived flows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub sessions: u32,
    /// Propagation time from the source to the router.
    pub fwd_prop: f64,
    /// Propagation time from the router back to the source via the receiver.
    pub bwd_prop: f64,
}

impl SourceSpec {
    pub fn new(sessions: u32, fwd_prop: f64, bwd_prop: f64) -> Self {
        Self {
            sessions,
            fwd_prop,
            bwd_prop,
        }
    }

    /// Total propagation round trip `T_p`.
    pub fn propagation(&self) -> f64 {
        self.fwd_prop + self.bwd_prop
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyInterval {
    pub start: f64,
    pub end: f64,
    /// Extra non-responsive inflow while active.
    pub rate: f64,
}

/// Piecewise-constant exogenous inflow `d(t)`; zero outside the intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnomalySchedule {
    pub intervals: Vec<AnomalyInterval>,
}

impl AnomalySchedule {
    pub fn new(intervals: Vec<AnomalyInterval>) -> Self {
        Self { intervals }
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// Intervals are half-open `[start, end)`.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.intervals
            .iter()
            .find(|iv| t >= iv.start && t < iv.end)
            .map_or(0.0, |iv| iv.rate)
    }

    pub fn is_quiet(&self) -> bool {
        self.intervals.iter().all(|iv| iv.rate == 0.0)
    }
}

/// How the single aggregate equation `Σ η_i x_i0 = c` is closed into
/// per-source rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// One drop probability for all flows: common window `w0 = x_i0 τ_i0`,
    /// hence rates inversely proportional to RTT.
    #[default]
    UniformDrop,
    /// Every connection gets the same rate `c / Σ η_i`; drop probabilities
    /// differ per source.
    EqualRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub capacity: f64,
    pub buffer_max: f64,
    pub queue_target: f64,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub anomaly: AnomalySchedule,
    #[serde(default)]
    pub closure: Closure,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("no sources")]
    NoSources,
    #[error("capacity must be positive (got {0})")]
    NonPositiveCapacity(f64),
    #[error("buffer max must be positive (got {0})")]
    NonPositiveBuffer(f64),
    #[error("target not below buffer max ({target} >= {buffer_max})")]
    TargetNotBelowBufferMax { target: f64, buffer_max: f64 },
    #[error("queue target must be positive (got {0})")]
    NonPositiveTarget(f64),
    #[error("source {index}: session count must be at least 1")]
    NoSessions { index: usize },
    #[error("source {index}: propagation delays must be finite and non-negative")]
    NegativeDelay { index: usize },
    #[error("source {index}: total propagation delay must be positive")]
    ZeroPropagation { index: usize },
    #[error("anomaly interval {index} is malformed (start < end, rate >= 0 required)")]
    BadInterval { index: usize },
    #[error("overlapping anomaly intervals at {start}..{end}")]
    OverlappingIntervals { start: f64, end: f64 },
    #[error("non-finite value in field `{0}`")]
    NonFinite(&'static str),
}

/// A `NetworkConfig` that passed [`validate_config`]. Sources are sorted by
/// propagation round trip and anomaly intervals by start time.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(NetworkConfig);

impl ValidatedConfig {
    pub fn get(&self) -> &NetworkConfig {
        &self.0
    }

    pub fn into_inner(self) -> NetworkConfig {
        self.0
    }

    pub fn sources(&self) -> &[SourceSpec] {
        &self.0.sources
    }

    pub fn capacity(&self) -> f64 {
        self.0.capacity
    }

    pub fn num_sources(&self) -> usize {
        self.0.sources.len()
    }

    pub fn sessions(&self) -> Vec<f64> {
        self.0.sources.iter().map(|s| f64::from(s.sessions)).collect()
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = NetworkConfig;

    fn deref(&self) -> &NetworkConfig {
        &self.0
    }
}

pub fn validate_config(cfg: NetworkConfig) -> Result<ValidatedConfig, ConfigError> {
    let mut cfg = cfg;
    if cfg.sources.is_empty() {
        return Err(ConfigError::NoSources);
    }
    for (name, v) in [
        ("capacity", cfg.capacity),
        ("buffer_max", cfg.buffer_max),
        ("queue_target", cfg.queue_target),
    ] {
        if !v.is_finite() {
            return Err(ConfigError::NonFinite(name));
        }
    }
    if cfg.capacity <= 0.0 {
        return Err(ConfigError::NonPositiveCapacity(cfg.capacity));
    }
    if cfg.buffer_max <= 0.0 {
        return Err(ConfigError::NonPositiveBuffer(cfg.buffer_max));
    }
    if cfg.queue_target >= cfg.buffer_max {
        return Err(ConfigError::TargetNotBelowBufferMax {
            target: cfg.queue_target,
            buffer_max: cfg.buffer_max,
        });
    }
    if cfg.queue_target <= 0.0 {
        return Err(ConfigError::NonPositiveTarget(cfg.queue_target));
    }
    for (index, s) in cfg.sources.iter().enumerate() {
        if s.sessions == 0 {
            return Err(ConfigError::NoSessions { index });
        }
        let ok = |d: f64| d.is_finite() && d >= 0.0;
        if !ok(s.fwd_prop) || !ok(s.bwd_prop) {
            return Err(ConfigError::NegativeDelay { index });
        }
        if s.propagation() <= 0.0 {
            return Err(ConfigError::ZeroPropagation { index });
        }
    }
    for (index, iv) in cfg.anomaly.intervals.iter().enumerate() {
        let finite = iv.start.is_finite() && iv.end.is_finite() && iv.rate.is_finite();
        if !finite || iv.start >= iv.end || iv.rate < 0.0 {
            return Err(ConfigError::BadInterval { index });
        }
    }
    cfg.anomaly
        .intervals
        .sort_by(|a, b| a.start.total_cmp(&b.start));
    for pair in cfg.anomaly.intervals.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(ConfigError::OverlappingIntervals {
                start: pair[1].start,
                end: pair[0].end,
            });
        }
    }
    // stable: equal round trips keep file order
    cfg.sources
        .sort_by(|a, b| a.propagation().total_cmp(&b.propagation()));
    Ok(ValidatedConfig(cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceEquilibrium {
    /// Round-trip time `τ_i0`.
    pub rtt: f64,
    /// Source-to-router delay `τ_i^f`.
    pub fwd_delay: f64,
    /// Router-to-source delay `τ_i^b`, including queueing.
    pub bwd_delay: f64,
    /// Per-connection rate `x_i0`.
    pub rate: f64,
    pub drop_prob: f64,
}

impl SourceEquilibrium {
    pub fn window(&self) -> f64 {
        self.rate * self.rtt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub sources: Vec<SourceEquilibrium>,
    pub queue: f64,
}

impl Equilibrium {
    pub fn rates(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.rate).collect()
    }

    pub fn drop_probs(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.drop_prob).collect()
    }

    pub fn fwd_delays(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.fwd_delay).collect()
    }

    pub fn bwd_delays(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.bwd_delay).collect()
    }

    pub fn rtts(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.rtt).collect()
    }
}

/// Stationary drop probability of an AIMD source with window `w`.
pub fn drop_prob_for_window(w: f64) -> f64 {
    2.0 / (2.0 + w * w)
}

pub fn compute_equilibrium(cfg: &ValidatedConfig) -> Equilibrium {
    let c = cfg.capacity;
    let b0 = cfg.queue_target;
    let queueing = b0 / c;
    let rtts: Vec<f64> = cfg
        .sources
        .iter()
        .map(|s| s.propagation() + queueing)
        .collect();
    let rates: Vec<f64> = match cfg.closure {
        Closure::UniformDrop => {
            let weight: f64 = cfg
                .sources
                .iter()
                .zip(&rtts)
                .map(|(s, tau)| f64::from(s.sessions) / tau)
                .sum();
            let w0 = c / weight;
            rtts.iter().map(|tau| w0 / tau).collect()
        }
        Closure::EqualRate => {
            let total: f64 = cfg.sources.iter().map(|s| f64::from(s.sessions)).sum();
            vec![c / total; rtts.len()]
        }
    };
    let sources = cfg
        .sources
        .iter()
        .zip(rtts.iter().zip(&rates))
        .map(|(s, (&rtt, &rate))| SourceEquilibrium {
            rtt,
            fwd_delay: s.fwd_prop,
            bwd_delay: s.bwd_prop + queueing,
            rate,
            drop_prob: drop_prob_for_window(rate * rtt),
        })
        .collect();
    Equilibrium { sources, queue: b0 }
}
