//! Nonlinear rate-based fluid model of N TCP sources sharing one AQM router.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dde::{self, DdeError, DelaySystem, Trace};
use crate::topology::{Equilibrium, NetworkConfig, ValidatedConfig};

/// Rates are kept strictly positive inside the vector field; the
/// additive-increase term divides by the current rate.
const MIN_RATE: f64 = 1e-9;

/// AIMD rate dynamics of one source.
///
/// `rate_rtt` is `x_i(t - τ_i)`, `drop_bwd` is `p_i(t - τ_i^b)`, `rtt` the
/// current round trip `b(t)/c + T_p`, and `inflow` the delayed aggregate
/// arrival rate `Σ_j η_j x_j(t - τ_j^f)`.
pub fn rate_derivative(
    rate: f64,
    rate_rtt: f64,
    drop_bwd: f64,
    rtt: f64,
    inflow: f64,
    capacity: f64,
) -> f64 {
    let x = rate.max(MIN_RATE);
    rate_rtt / (x * rtt * rtt) * (1.0 - drop_bwd) - rate_rtt * x / 2.0 * drop_bwd + x / rtt
        - x / (rtt * capacity) * inflow
}

/// Arguments of the unconstrained vector field, with delays frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPoint {
    pub rates: Vec<f64>,
    pub queue: f64,
    /// `x_i(t - τ_i)`
    pub rates_rtt: Vec<f64>,
    /// `x_i(t - τ_i^f)`
    pub rates_fwd: Vec<f64>,
    /// `p_i(t - τ_i^b)`
    pub drops_bwd: Vec<f64>,
}

impl FieldPoint {
    pub fn at_equilibrium(eq: &Equilibrium) -> Self {
        let rates = eq.rates();
        Self {
            rates_rtt: rates.clone(),
            rates_fwd: rates.clone(),
            drops_bwd: eq.drop_probs(),
            queue: eq.queue,
            rates,
        }
    }
}

/// Right-hand side `(ẋ_1..ẋ_N, ḃ)` without saturation.
pub fn fluid_field(net: &NetworkConfig, pt: &FieldPoint, anomaly: f64) -> Vec<f64> {
    let c = net.capacity;
    let inflow: f64 = net
        .sources
        .iter()
        .zip(&pt.rates_fwd)
        .map(|(s, x)| f64::from(s.sessions) * x)
        .sum();
    let mut out: Vec<f64> = net
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rtt = pt.queue / c + s.propagation();
            rate_derivative(pt.rates[i], pt.rates_rtt[i], pt.drops_bwd[i], rtt, inflow, c)
        })
        .collect();
    out.push(-c + anomaly + inflow);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AqmKind {
    /// Proportional-integral on the queue error.
    #[default]
    Pi,
    /// Holds every source at its equilibrium drop probability.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AqmPolicy {
    #[serde(default)]
    pub kind: AqmKind,
    /// 1/packet
    #[serde(default)]
    pub kp: f64,
    /// 1/(packet·second)
    #[serde(default)]
    pub ki: f64,
}

impl AqmPolicy {
    pub fn pi(kp: f64, ki: f64) -> Self {
        Self {
            kind: AqmKind::Pi,
            kp,
            ki,
        }
    }

    pub fn constant() -> Self {
        Self {
            kind: AqmKind::Constant,
            kp: 0.0,
            ki: 0.0,
        }
    }

    /// Writes `clamp(p_i0 + kp δb + ki ∫δb, 0, 1)` into `out` and returns
    /// whether any source was clamped.
    pub fn drop_probs(&self, eq_probs: &[f64], queue_error: f64, integral: f64, out: &mut [f64]) -> bool {
        let shift = match self.kind {
            AqmKind::Pi => self.kp * queue_error + self.ki * integral,
            AqmKind::Constant => 0.0,
        };
        let mut clamped = false;
        for (p, p0) in out.iter_mut().zip(eq_probs) {
            let raw = p0 + shift;
            *p = raw.clamp(0.0, 1.0);
            clamped |= *p != raw;
        }
        clamped
    }

    /// Time derivative of the integrator; frozen while the output is clamped.
    fn integral_rate(&self, clamped: bool, queue_error: f64) -> f64 {
        match self.kind {
            AqmKind::Pi if !clamped => queue_error,
            _ => 0.0,
        }
    }
}

/// One discrete AQM update: emits drop probabilities for the current queue
/// error and advances `integral` by `h` unless the output is clamped.
pub fn aqm_step(
    policy: &AqmPolicy,
    eq_probs: &[f64],
    queue_error: f64,
    integral: &mut f64,
    h: f64,
) -> Vec<f64> {
    let mut p = vec![0.0; eq_probs.len()];
    let clamped = policy.drop_probs(eq_probs, queue_error, *integral, &mut p);
    *integral += h * policy.integral_rate(clamped, queue_error);
    p
}

/// Constant offsets applied to the initial history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantInitial {
    #[serde(default)]
    pub rate_offsets: Vec<f64>,
    #[serde(default)]
    pub queue_offset: f64,
}

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("integration failed: {0}")]
    Integration(#[from] DdeError),
    #[error("initial offsets list has {got} entries for {expected} sources")]
    OffsetLength { expected: usize, got: usize },
}

/// The plant as a delay system. State layout: `[x_1..x_N, b, ∫δb]`.
///
/// Delay slots: `[τ_1..τ_N, τ_1^f..τ_N^f, τ_1^b..τ_N^b]`, all frozen at
/// their equilibrium values. The round trip that multiplies the vector field
/// follows the live queue.
#[derive(Debug, Clone)]
pub struct PlantModel {
    net: NetworkConfig,
    eq_rates: Vec<f64>,
    eq_probs: Vec<f64>,
    queue_target: f64,
    aqm: AqmPolicy,
    delays: Vec<f64>,
    history: Vec<f64>,
}

impl PlantModel {
    pub fn new(
        cfg: &ValidatedConfig,
        eq: &Equilibrium,
        aqm: AqmPolicy,
        initial: &PlantInitial,
    ) -> Result<Self, PlantError> {
        let n = cfg.num_sources();
        if !initial.rate_offsets.is_empty() && initial.rate_offsets.len() != n {
            return Err(PlantError::OffsetLength {
                expected: n,
                got: initial.rate_offsets.len(),
            });
        }
        let mut delays = eq.rtts();
        delays.extend(eq.fwd_delays());
        delays.extend(eq.bwd_delays());
        let mut history: Vec<f64> = eq.rates();
        for (x, off) in history.iter_mut().zip(&initial.rate_offsets) {
            *x = (*x + off).max(0.0);
        }
        history.push((eq.queue + initial.queue_offset).clamp(0.0, cfg.buffer_max));
        history.push(0.0);
        Ok(Self {
            net: cfg.get().clone(),
            eq_rates: eq.rates(),
            eq_probs: eq.drop_probs(),
            queue_target: eq.queue,
            aqm,
            delays,
            history,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.eq_rates.len()
    }

    /// Length of the plant block inside a (possibly larger) state vector.
    pub fn state_len(&self) -> usize {
        self.num_sources() + 2
    }

    pub fn delay_slots(&self) -> &[f64] {
        &self.delays
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.history
    }

    pub fn equilibrium_probs(&self) -> &[f64] {
        &self.eq_probs
    }

    /// AQM output for the plant state held in the first `state_len` entries.
    pub fn drops_of(&self, x: &[f64], out: &mut [f64]) -> bool {
        let n = self.num_sources();
        let b = x[n].clamp(0.0, self.net.buffer_max);
        self.aqm
            .drop_probs(&self.eq_probs, b - self.queue_target, x[n + 1], out)
    }

    /// `p_i(t - τ_i^b)` read from the delay slots.
    pub fn delayed_drops(&self, delayed: &[Vec<f64>], out: &mut [f64]) {
        let n = self.num_sources();
        let mut p = vec![0.0; n];
        for i in 0..n {
            self.drops_of(&delayed[2 * n + i], &mut p);
            out[i] = p[i];
        }
    }

    /// Writes the plant derivatives into `dx[..state_len]`. Only the leading
    /// `state_len` entries of `x` and of each delayed vector are read.
    pub fn field(&self, t: f64, x: &[f64], delayed: &[Vec<f64>], dx: &mut [f64]) {
        let n = self.num_sources();
        let c = self.net.capacity;
        let bmax = self.net.buffer_max;
        let b = x[n].clamp(0.0, bmax);
        let mut drops_bwd = vec![0.0; n];
        self.delayed_drops(delayed, &mut drops_bwd);
        let inflow: f64 = self
            .net
            .sources
            .iter()
            .enumerate()
            .map(|(j, s)| f64::from(s.sessions) * delayed[n + j][j].max(0.0))
            .sum();
        for (i, s) in self.net.sources.iter().enumerate() {
            let rtt = b / c + s.propagation();
            let x_rtt = delayed[i][i].max(0.0);
            dx[i] = rate_derivative(x[i], x_rtt, drops_bwd[i], rtt, inflow, c);
            if x[i] <= 0.0 && dx[i] < 0.0 {
                dx[i] = 0.0;
            }
        }
        let mut db = -c + self.net.anomaly.rate_at(t) + inflow;
        if (x[n] <= 0.0 && db < 0.0) || (x[n] >= bmax && db > 0.0) {
            db = 0.0;
        }
        dx[n] = db;
        let mut p = vec![0.0; n];
        let clamped = self.drops_of(x, &mut p);
        dx[n + 1] = self.aqm.integral_rate(clamped, b - self.queue_target);
    }

    /// Keeps rates non-negative and the queue inside the buffer.
    pub fn project_state(&self, x: &mut [f64]) {
        let n = self.num_sources();
        for v in &mut x[..n] {
            *v = v.max(0.0);
        }
        x[n] = x[n].clamp(0.0, self.net.buffer_max);
    }

    /// Recorded signals: `p_i(t)`, `p_i(t - τ_i^b)`, `d(t)`.
    pub fn record_signals(&self, t: f64, x: &[f64], delayed: &[Vec<f64>], out: &mut [f64]) {
        let n = self.num_sources();
        self.drops_of(x, &mut out[..n]);
        self.delayed_drops(delayed, &mut out[n..2 * n]);
        out[2 * n] = self.net.anomaly.rate_at(t);
    }

    pub fn signal_count(&self) -> usize {
        2 * self.num_sources() + 1
    }
}

impl DelaySystem for PlantModel {
    fn dim(&self) -> usize {
        self.state_len()
    }

    fn delays(&self) -> &[f64] {
        &self.delays
    }

    fn history(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.history);
    }

    fn rhs(&self, t: f64, x: &[f64], delayed: &[Vec<f64>], dx: &mut [f64]) {
        self.field(t, x, delayed, dx);
    }

    fn project(&self, x: &mut [f64]) {
        self.project_state(x);
    }

    fn num_inputs(&self) -> usize {
        self.signal_count()
    }

    fn record(&self, t: f64, x: &[f64], delayed: &[Vec<f64>], out: &mut [f64]) {
        self.record_signals(t, x, delayed, out);
    }
}

/// Plant trajectory with named accessors over the raw trace.
#[derive(Debug, Clone)]
pub struct PlantTrace {
    pub trace: Trace,
    pub num_sources: usize,
}

impl PlantTrace {
    pub fn rate(&self, i: usize) -> Vec<f64> {
        self.trace.component(i)
    }

    pub fn queue(&self) -> Vec<f64> {
        self.trace.component(self.num_sources)
    }

    pub fn drop(&self, i: usize) -> Vec<f64> {
        self.trace.input_component(i)
    }

    pub fn delayed_drop(&self, i: usize) -> Vec<f64> {
        self.trace.input_component(self.num_sources + i)
    }

    pub fn anomaly(&self) -> Vec<f64> {
        self.trace.input_component(2 * self.num_sources)
    }

    pub fn to_csv(&self) -> String {
        let n = self.num_sources;
        let mut states: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        states.push("b".into());
        states.push("aqm_integral".into());
        let mut inputs: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
        inputs.extend((1..=n).map(|i| format!("p{i}_delayed")));
        inputs.push("d".into());
        self.trace.to_csv(&states, &inputs)
    }
}

pub fn simulate_plant(
    cfg: &ValidatedConfig,
    eq: &Equilibrium,
    aqm: AqmPolicy,
    initial: &PlantInitial,
    horizon: f64,
    h: f64,
) -> Result<PlantTrace, PlantError> {
    let model = PlantModel::new(cfg, eq, aqm, initial)?;
    let trace = dde::integrate(&model, horizon, h)?;
    Ok(PlantTrace {
        trace,
        num_sources: cfg.num_sources(),
    })
}
