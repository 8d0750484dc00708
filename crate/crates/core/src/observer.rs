//! Observer runtime: estimation from queue measurements, closed-loop
//! co-simulation with the plant, and threshold alarms on the disturbance
//! estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dde::{self, fmt_f64, DdeError, DelaySystem, Trace};
use crate::linearizer::AugmentedModel;
use crate::plant::{AqmPolicy, PlantError, PlantInitial, PlantModel};
use crate::topology::{Equilibrium, ValidatedConfig};

#[derive(Debug, Error)]
pub enum ObserverError {
    #[error("measurement series has {got} samples, grid needs {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error("gain has {got} entries, model needs {expected}")]
    GainLength { expected: usize, got: usize },
    #[error("plant: {0}")]
    Plant(#[from] PlantError),
    #[error("integration: {0}")]
    Integration(#[from] DdeError),
}

/// Linear observer dynamics shared by every runtime variant.
#[derive(Debug, Clone)]
struct Estimator {
    a_bar: DMatrix<f64>,
    parts: Vec<DMatrix<f64>>,
    b_bar: DMatrix<f64>,
    c_bar: DMatrix<f64>,
    gain: DVector<f64>,
}

impl Estimator {
    fn new(aug: &AugmentedModel, gain: &DVector<f64>) -> Result<Self, ObserverError> {
        if gain.len() != aug.dim() {
            return Err(ObserverError::GainLength {
                expected: aug.dim(),
                got: gain.len(),
            });
        }
        Ok(Self {
            a_bar: aug.a_bar.clone(),
            parts: aug.a_d_parts.clone(),
            b_bar: aug.b_bar.clone(),
            c_bar: aug.c_bar.clone(),
            gain: gain.clone(),
        })
    }

    fn dim(&self) -> usize {
        self.a_bar.nrows()
    }

    /// `Āx̂ + Σ Ā_di x̂(t − τ_i^f) + B̄u + L(y − C̄x̂)`. Column `i` of
    /// `Ā_di` is its only nonzero column, so only `x̂_i(t − τ_i^f)` is read.
    fn field(&self, xhat: &[f64], delayed_rate: impl Fn(usize) -> f64, u: &[f64], y: f64, out: &mut [f64]) {
        let n = self.dim();
        let innovation = y - (0..n).map(|j| self.c_bar[(0, j)] * xhat[j]).sum::<f64>();
        for r in 0..n {
            let mut v = self.gain[r] * innovation;
            for j in 0..n {
                v += self.a_bar[(r, j)] * xhat[j];
            }
            for (i, part) in self.parts.iter().enumerate() {
                v += part[(r, i)] * delayed_rate(i);
            }
            for (k, uk) in u.iter().enumerate() {
                v += self.b_bar[(r, k)] * uk;
            }
            out[r] = v;
        }
    }
}

/// Error dynamics `ė = (Ā − LC̄)e + Σ Ā_di e(t − τ_i^f)` from a constant
/// initial history.
#[derive(Debug, Clone)]
pub struct ErrorDynamics {
    closed: DMatrix<f64>,
    parts: Vec<DMatrix<f64>>,
    delays: Vec<f64>,
    initial: Vec<f64>,
}

impl ErrorDynamics {
    pub fn new(aug: &AugmentedModel, gain: &DVector<f64>, initial: &[f64]) -> Self {
        Self {
            closed: &aug.a_bar - gain * &aug.c_bar,
            parts: aug.a_d_parts.clone(),
            delays: aug.fwd_delays.clone(),
            initial: initial.to_vec(),
        }
    }
}

impl DelaySystem for ErrorDynamics {
    fn dim(&self) -> usize {
        self.closed.nrows()
    }

    fn delays(&self) -> &[f64] {
        &self.delays
    }

    fn history(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.initial);
    }

    fn rhs(&self, _t: f64, x: &[f64], delayed: &[Vec<f64>], dx: &mut [f64]) {
        let n = self.dim();
        for r in 0..n {
            let mut v = 0.0;
            for j in 0..n {
                v += self.closed[(r, j)] * x[j];
            }
            for (i, part) in self.parts.iter().enumerate() {
                v += part[(r, i)] * delayed[i][i];
            }
            dx[r] = v;
        }
    }
}

/// Euclidean norm of each row of a trace.
pub fn norm_series(trace: &Trace) -> Vec<f64> {
    (0..trace.len())
        .map(|k| trace.state(k).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Signals sampled on the integration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    /// `y = δb`
    pub queue_dev: Vec<f64>,
    /// `u_i = δp_i(t − τ_i^b)`, one vector per grid point.
    pub drop_dev: Vec<Vec<f64>>,
}

struct SeriesObserver<'a> {
    est: Estimator,
    delays: Vec<f64>,
    initial: Vec<f64>,
    meas: &'a Measurements,
    h: f64,
}

impl SeriesObserver<'_> {
    /// Linear interpolation of the measurements at `t`.
    fn sample(&self, t: f64, u: &mut [f64]) -> f64 {
        let last = self.meas.queue_dev.len() - 1;
        let pos = (t / self.h).max(0.0);
        let k = (pos.floor() as usize).min(last);
        let frac = if k == last { 0.0 } else { pos - k as f64 };
        let lerp = |a: f64, b: f64| if frac == 0.0 { a } else { a + frac * (b - a) };
        let k1 = (k + 1).min(last);
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = lerp(self.meas.drop_dev[k][i], self.meas.drop_dev[k1][i]);
        }
        lerp(self.meas.queue_dev[k], self.meas.queue_dev[k1])
    }
}

impl DelaySystem for SeriesObserver<'_> {
    fn dim(&self) -> usize {
        self.est.dim()
    }

    fn delays(&self) -> &[f64] {
        &self.delays
    }

    fn history(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.initial);
    }

    fn rhs(&self, t: f64, x: &[f64], delayed: &[Vec<f64>], dx: &mut [f64]) {
        let mut u = vec![0.0; self.est.b_bar.ncols()];
        let y = self.sample(t, &mut u);
        self.est.field(x, |i| delayed[i][i], &u, y, dx);
    }
}

/// Integrates the observer driven by measured deviations. The series must
/// hold one sample per grid point of `[0, horizon]` at step `h`.
pub fn run_observer(
    aug: &AugmentedModel,
    gain: &DVector<f64>,
    meas: &Measurements,
    horizon: f64,
    h: f64,
    initial: &[f64],
) -> Result<Trace, ObserverError> {
    let expected = dde::step_count(horizon, h) + 1;
    for got in [meas.queue_dev.len(), meas.drop_dev.len()] {
        if got != expected {
            return Err(ObserverError::GridMismatch { expected, got });
        }
    }
    let sys = SeriesObserver {
        est: Estimator::new(aug, gain)?,
        delays: aug.fwd_delays.clone(),
        initial: initial.to_vec(),
        meas,
        h,
    };
    Ok(dde::integrate(&sys, horizon, h)?)
}

/// The linearised plant and the observer integrated together; the plant is
/// unforced (`u = 0`) and starts from `plant_initial`.
#[derive(Debug, Clone)]
pub struct LinearLoop {
    est: Estimator,
    open: Estimator,
    delays: Vec<f64>,
    initial: Vec<f64>,
}

impl LinearLoop {
    pub fn new(
        aug: &AugmentedModel,
        gain: &DVector<f64>,
        plant_initial: &[f64],
        observer_initial: &[f64],
    ) -> Result<Self, ObserverError> {
        let mut initial = plant_initial.to_vec();
        initial.extend_from_slice(observer_initial);
        let est = Estimator::new(aug, gain)?;
        let mut open = est.clone();
        open.gain.fill(0.0);
        Ok(Self {
            est,
            open,
            delays: aug.fwd_delays.clone(),
            initial,
        })
    }
}

impl DelaySystem for LinearLoop {
    fn dim(&self) -> usize {
        2 * self.est.dim()
    }

    fn delays(&self) -> &[f64] {
        &self.delays
    }

    fn history(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.initial);
    }

    fn rhs(&self, _t: f64, x: &[f64], delayed: &[Vec<f64>], dx: &mut [f64]) {
        let n = self.est.dim();
        let u = vec![0.0; self.est.b_bar.ncols()];
        let (plant, obs) = x.split_at(n);
        let (dplant, dobs) = dx.split_at_mut(n);
        let y = plant[n - 2];
        self.open.field(plant, |i| delayed[i][i], &u, 0.0, dplant);
        self.est.field(obs, |i| delayed[i][n + i], &u, y, dobs);
    }
}

/// Observer settings used by the closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ObserverInit {
    /// Initial estimate `x̂(θ)` on the lookback window; zero by default.
    #[serde(default)]
    pub initial: Vec<f64>,
    /// Round the measured queue to whole packets.
    #[serde(default)]
    pub quantize: bool,
}

/// Nonlinear plant plus observer on one state vector `[plant, x̂]`.
struct ClosedLoop {
    plant: PlantModel,
    est: Estimator,
    queue_target: f64,
    history: Vec<f64>,
    quantize: bool,
}

impl ClosedLoop {
    fn measurements(&self, x: &[f64], delayed: &[Vec<f64>], u: &mut [f64]) -> f64 {
        let n = self.plant.num_sources();
        self.plant.delayed_drops(delayed, u);
        for (ui, p0) in u.iter_mut().zip(self.plant.equilibrium_probs()) {
            *ui -= p0;
        }
        let b = x[n];
        let b = if self.quantize { b.round() } else { b };
        b - self.queue_target
    }
}

impl DelaySystem for ClosedLoop {
    fn dim(&self) -> usize {
        self.plant.state_len() + self.est.dim()
    }

    fn delays(&self) -> &[f64] {
        self.plant.delay_slots()
    }

    fn history(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.history);
    }

    fn rhs(&self, t: f64, x: &[f64], delayed: &[Vec<f64>], dx: &mut [f64]) {
        let n = self.plant.num_sources();
        let off = self.plant.state_len();
        self.plant.field(t, x, delayed, dx);
        let mut u = vec![0.0; n];
        let y = self.measurements(x, delayed, &mut u);
        // forward-delay slots sit at n..2n
        self.est
            .field(&x[off..], |i| delayed[n + i][off + i], &u, y, &mut dx[off..]);
    }

    fn project(&self, x: &mut [f64]) {
        self.plant.project_state(x);
    }

    fn num_inputs(&self) -> usize {
        self.plant.signal_count()
    }

    fn record(&self, t: f64, x: &[f64], delayed: &[Vec<f64>], out: &mut [f64]) {
        self.plant.record_signals(t, x, delayed, out);
    }
}

/// Plant truth and observer estimates on one grid.
#[derive(Debug, Clone)]
pub struct CombinedTrace {
    pub trace: Trace,
    pub num_sources: usize,
    pub eq_rates: Vec<f64>,
    pub queue_target: f64,
}

impl CombinedTrace {
    fn est_offset(&self) -> usize {
        self.num_sources + 2
    }

    pub fn times(&self) -> Vec<f64> {
        self.trace.times()
    }

    pub fn rate(&self, i: usize) -> Vec<f64> {
        self.trace.component(i)
    }

    /// Absolute estimate `x_i0 + δx̂_i`.
    pub fn rate_estimate(&self, i: usize) -> Vec<f64> {
        let x0 = self.eq_rates[i];
        self.trace
            .component(self.est_offset() + i)
            .into_iter()
            .map(|v| x0 + v)
            .collect()
    }

    pub fn queue(&self) -> Vec<f64> {
        self.trace.component(self.num_sources)
    }

    pub fn queue_estimate(&self) -> Vec<f64> {
        self.trace
            .component(self.est_offset() + self.num_sources)
            .into_iter()
            .map(|v| self.queue_target + v)
            .collect()
    }

    pub fn drop(&self, i: usize) -> Vec<f64> {
        self.trace.input_component(i)
    }

    pub fn anomaly(&self) -> Vec<f64> {
        self.trace.input_component(2 * self.num_sources)
    }

    pub fn anomaly_estimate(&self) -> Vec<f64> {
        self.trace.component(self.est_offset() + self.num_sources + 1)
    }

    /// True deviations `(δx, δb, d)` per grid point.
    pub fn truth_deviation(&self) -> Vec<Vec<f64>> {
        let n = self.num_sources;
        let d = self.anomaly();
        (0..self.trace.len())
            .map(|k| {
                let s = self.trace.state(k);
                let mut v: Vec<f64> = (0..n).map(|i| s[i] - self.eq_rates[i]).collect();
                v.push(s[n] - self.queue_target);
                v.push(d[k]);
                v
            })
            .collect()
    }

    pub fn estimate_deviation(&self) -> Vec<Vec<f64>> {
        let off = self.est_offset();
        (0..self.trace.len())
            .map(|k| self.trace.state(k)[off..].to_vec())
            .collect()
    }

    /// Columns: t, x_i, xhat_i, b, bhat, p_i, d, dhat, alarm.
    pub fn to_csv(&self, alarms: &AlarmReport) -> String {
        self.to_csv_every(alarms, 1)
    }

    /// As [`Self::to_csv`], keeping every `stride`-th grid point.
    pub fn to_csv_every(&self, alarms: &AlarmReport, stride: usize) -> String {
        let n = self.num_sources;
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",xhat{i}"));
        }
        out.push_str(",b,bhat");
        for i in 1..=n {
            out.push_str(&format!(",p{i}"));
        }
        out.push_str(",d,dhat,alarm\n");
        let off = self.est_offset();
        for k in (0..self.trace.len()).step_by(stride.max(1)) {
            let t = self.trace.time(k);
            let s = self.trace.state(k);
            let inp = self.trace.input(k);
            out.push_str(&fmt_f64(t));
            let mut col = |v: f64| {
                out.push(',');
                out.push_str(&fmt_f64(v));
            };
            for i in 0..n {
                col(s[i]);
            }
            for i in 0..n {
                col(self.eq_rates[i] + s[off + i]);
            }
            col(s[n]);
            col(self.queue_target + s[off + n]);
            for i in 0..n {
                col(inp[i]);
            }
            col(inp[2 * n]);
            col(s[off + n + 1]);
            out.push(',');
            out.push(if alarms.active_at(t) { '1' } else { '0' });
            out.push('\n');
        }
        out
    }
}

/// Co-simulates the nonlinear plant and the observer. The observer sees
/// `y = b − b₀` and the delayed drop deviations the AQM emitted.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop(
    cfg: &ValidatedConfig,
    eq: &Equilibrium,
    aqm: AqmPolicy,
    aug: &AugmentedModel,
    gain: &DVector<f64>,
    plant_initial: &PlantInitial,
    observer: &ObserverInit,
    horizon: f64,
    h: f64,
) -> Result<CombinedTrace, ObserverError> {
    let plant = PlantModel::new(cfg, eq, aqm, plant_initial)?;
    let est = Estimator::new(aug, gain)?;
    let mut history = plant.initial_state().to_vec();
    if observer.initial.is_empty() {
        history.extend(std::iter::repeat_n(0.0, est.dim()));
    } else if observer.initial.len() != est.dim() {
        return Err(ObserverError::GainLength {
            expected: est.dim(),
            got: observer.initial.len(),
        });
    } else {
        history.extend_from_slice(&observer.initial);
    }
    let sys = ClosedLoop {
        plant,
        est,
        queue_target: eq.queue,
        history,
        quantize: observer.quantize,
    };
    let trace = dde::integrate(&sys, horizon, h)?;
    Ok(CombinedTrace {
        trace,
        num_sources: cfg.num_sources(),
        eq_rates: eq.rates(),
        queue_target: eq.queue,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alarm {
    pub onset: f64,
    pub clear: f64,
    pub mean_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlarmReport {
    pub threshold: f64,
    pub hold: f64,
    pub alarms: Vec<Alarm>,
}

impl AlarmReport {
    pub fn active_at(&self, t: f64) -> bool {
        self.alarms.iter().any(|a| t >= a.onset && t < a.clear)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "threshold = {}\nhold = {}\nalarms = {}\n",
            fmt_f64(self.threshold),
            fmt_f64(self.hold),
            self.alarms.len()
        );
        for a in &self.alarms {
            out.push_str(&format!(
                "onset = {}, clear = {}, mean_dhat = {}\n",
                fmt_f64(a.onset),
                fmt_f64(a.clear),
                fmt_f64(a.mean_estimate)
            ));
        }
        out
    }
}

/// Dwell-time hysteresis: an alarm is raised once `|d̂| > θ` has held for
/// `hold` seconds and cleared once `|d̂| ≤ θ` has held for `hold` seconds.
/// Onset and clear are the confirmation times. An alarm still open at the
/// end of the series closes at the last sample.
pub fn detect_anomalies(times: &[f64], dhat: &[f64], threshold: f64, hold: f64) -> AlarmReport {
    assert_eq!(times.len(), dhat.len());
    let mut alarms = Vec::new();
    let mut open: Option<usize> = None;
    // start of the current run on the other side of the threshold
    let mut run_start: Option<f64> = None;
    let close = |onset_k: usize, end_k: usize, alarms: &mut Vec<Alarm>| {
        let slice = &dhat[onset_k..=end_k];
        alarms.push(Alarm {
            onset: times[onset_k],
            clear: times[end_k],
            mean_estimate: slice.iter().sum::<f64>() / slice.len() as f64,
        });
    };
    for (k, (&t, &v)) in times.iter().zip(dhat).enumerate() {
        let above = v.abs() > threshold;
        let crossing = match open {
            None => above,
            Some(_) => !above,
        };
        if !crossing {
            run_start = None;
            continue;
        }
        let start = *run_start.get_or_insert(t);
        if t - start >= hold {
            match open.take() {
                None => open = Some(k),
                Some(onset_k) => close(onset_k, k, &mut alarms),
            }
            run_start = None;
        }
    }
    if let Some(onset_k) = open {
        close(onset_k, times.len() - 1, &mut alarms);
    }
    AlarmReport {
        threshold,
        hold,
        alarms,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub rmse: Vec<f64>,
    /// First time with `‖e‖ < 1% ‖e(0)‖`.
    pub convergence_time: Option<f64>,
    /// Mean of `truth − estimate` over the final 10% of samples.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("traces are not aligned ({0} vs {1} samples)")]
    Mismatch(usize, usize),
    #[error("empty trace")]
    Empty,
}

pub fn error_metrics(
    times: &[f64],
    truth: &[Vec<f64>],
    estimate: &[Vec<f64>],
) -> Result<ErrorMetrics, MetricsError> {
    if truth.len() != estimate.len() || times.len() != truth.len() {
        return Err(MetricsError::Mismatch(truth.len(), estimate.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dim = truth[0].len();
    if truth.iter().chain(estimate).any(|v| v.len() != dim) {
        return Err(MetricsError::Mismatch(truth.len(), estimate.len()));
    }
    let k = truth.len();
    let err: Vec<Vec<f64>> = truth
        .iter()
        .zip(estimate)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let rmse = (0..dim)
        .map(|j| (err.iter().map(|e| e[j] * e[j]).sum::<f64>() / k as f64).sqrt())
        .collect();
    let norm = |e: &[f64]| e.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e0 = norm(&err[0]);
    let convergence_time = err
        .iter()
        .zip(times)
        .find(|(e, _)| norm(e) < 0.01 * e0)
        .map(|(_, t)| *t);
    let tail = (k / 10).max(1);
    let bias = (0..dim)
        .map(|j| err[k - tail..].iter().map(|e| e[j]).sum::<f64>() / tail as f64)
        .collect();
    Ok(ErrorMetrics {
        rmse,
        convergence_time,
        bias,
    })
}

impl ErrorMetrics {
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("state,rmse,bias\n");
        for (i, name) in names.iter().enumerate() {
            out.push_str(&format!("{name},{},{}\n", fmt_f64(self.rmse[i]), fmt_f64(self.bias[i])));
        }
        out.push_str(&format!(
            "convergence_time,{},\n",
            self.convergence_time.map_or("none".to_string(), fmt_f64)
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn grid(n: usize, h: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * h).collect()
    }

    #[test]
    fn quiet_estimate_raises_nothing() {
        let t = grid(1000, 0.01);
        let r = detect_anomalies(&t, &vec![0.0; 1000], 125.0, 1.0);
        assert!(r.alarms.is_empty());
    }

    #[test]
    fn step_raises_one_alarm_delayed_by_hold() {
        let h = 0.01;
        let t = grid(30_001, h);
        let d: Vec<f64> = t
            .iter()
            .map(|&t| if (150.0..170.0).contains(&t) { 750.0 } else { 0.0 })
            .collect();
        let r = detect_anomalies(&t, &d, 125.0, 1.0);
        assert_eq!(r.alarms.len(), 1);
        let a = r.alarms[0];
        assert!(a.onset >= 150.0 && a.onset <= 151.0 + 1e-9, "{}", a.onset);
        assert!(a.clear >= 170.0 && a.clear <= 171.0 + 1e-9, "{}", a.clear);
    }

    #[test]
    fn short_blip_is_ignored() {
        let t = grid(1000, 0.01);
        let d: Vec<f64> = t.iter().map(|&t| if (2.0..2.5).contains(&t) { 900.0 } else { 0.0 }).collect();
        assert!(detect_anomalies(&t, &d, 125.0, 1.0).alarms.is_empty());
    }

    #[test]
    fn metrics_of_identical_and_offset_traces() {
        let t = grid(50, 0.1);
        let a: Vec<Vec<f64>> = t.iter().map(|t| vec![t.sin(), 2.0 * t]).collect();
        let m = error_metrics(&t, &a, &a).unwrap();
        assert_eq!(m.rmse, vec![0.0, 0.0]);
        let b: Vec<Vec<f64>> = a.iter().map(|v| v.iter().map(|x| x - 1.0).collect()).collect();
        let m = error_metrics(&t, &a, &b).unwrap();
        for j in 0..2 {
            assert!((m.rmse[j] - 1.0).abs() < 1e-12);
            assert!((m.bias[j] - 1.0).abs() < 1e-12);
        }
        assert!(error_metrics(&t, &a, &b[1..]).is_err());
    }

    #[test]
    fn zero_inputs_keep_zero_estimate() {
        let aug = fixtures::printed_model();
        let h = 0.001;
        let k = dde::step_count(2.0, h) + 1;
        let meas = Measurements {
            queue_dev: vec![0.0; k],
            drop_dev: vec![vec![0.0; 3]; k],
        };
        let tr = run_observer(&aug, &fixtures::printed_gain(), &meas, 2.0, h, &[0.0; 5]).unwrap();
        assert!(tr.last_state().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_misaligned_series() {
        let aug = fixtures::printed_model();
        let meas = Measurements {
            queue_dev: vec![0.0; 10],
            drop_dev: vec![vec![0.0; 3]; 10],
        };
        assert!(matches!(
            run_observer(&aug, &fixtures::printed_gain(), &meas, 1.0, 0.001, &[0.0; 5]),
            Err(ObserverError::GridMismatch { expected: 1001, got: 10 })
        ));
    }
}
