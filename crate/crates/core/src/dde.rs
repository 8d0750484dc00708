//! Fixed-step RK4 for systems with several constant delays.
//!
//! Delayed states are read back from the stored trace. Between grid points the
//! trace is interpolated with cubic Hermite polynomials built from the stored
//! states and the right-hand side evaluated at each grid point, so the lookup
//! error is O(h^4) and does not cap the order of the RK4 step. Points before
//! `t = 0` come from the system's history function.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DdeError {
    #[error("step {step} is larger than a tenth of the smallest delay {min_delay}")]
    StepTooLarge { step: f64, min_delay: f64 },
    #[error("step must be positive and finite (got {0})")]
    BadStep(f64),
    #[error("horizon must be positive and finite (got {0})")]
    BadHorizon(f64),
    #[error("delay {0} is not strictly positive")]
    NonPositiveDelay(f64),
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
}

/// A retarded functional differential equation with constant delays.
pub trait DelaySystem {
    fn dim(&self) -> usize;

    /// Constant lags. `rhs` receives the state at `t - delays()[k]` in slot `k`.
    fn delays(&self) -> &[f64];

    /// Initial function on `[-max delay, 0]`.
    fn history(&self, t: f64, out: &mut [f64]);

    fn rhs(&self, t: f64, x: &[f64], delayed: &[Vec<f64>], dx: &mut [f64]);

    /// Called on the state after every completed step (e.g. to enforce bounds).
    fn project(&self, _x: &mut [f64]) {}

    /// Number of auxiliary signals recorded alongside the state.
    fn num_inputs(&self) -> usize {
        0
    }

    /// Auxiliary signals at a grid point, e.g. the drop probability an AQM
    /// emits.
    fn record(&self, _t: f64, _x: &[f64], _delayed: &[Vec<f64>], _out: &mut [f64]) {}
}

/// Uniformly sampled solution. Row `k` is the state at `t = k * step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    step: f64,
    dim: usize,
    num_inputs: usize,
    states: Vec<f64>,
    slopes: Vec<f64>,
    inputs: Vec<f64>,
}

impl Trace {
    fn with_capacity(step: f64, dim: usize, num_inputs: usize, rows: usize) -> Self {
        Self {
            step,
            dim,
            num_inputs,
            states: Vec::with_capacity(rows * dim),
            slopes: Vec::with_capacity(rows * dim),
            inputs: Vec::with_capacity(rows * num_inputs),
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    /// Number of grid points (steps + 1).
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            self.inputs.len() / self.num_inputs.max(1)
        } else {
            self.states.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn slope(&self, k: usize) -> &[f64] {
        &self.slopes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.num_inputs..(k + 1) * self.num_inputs]
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.state(k)[i]).collect()
    }

    pub fn input_component(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.input(k)[i]).collect()
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    fn push(&mut self, x: &[f64], slope: &[f64], input: &[f64]) {
        self.states.extend_from_slice(x);
        self.slopes.extend_from_slice(slope);
        self.inputs.extend_from_slice(input);
    }

    /// Hermite interpolation at fractional grid position `pos >= 0`.
    fn interpolate(&self, pos: f64, out: &mut [f64]) {
        let i = pos.floor() as usize;
        let s = pos - i as f64;
        let last = self.len() - 1;
        if i >= last {
            out.copy_from_slice(self.state(last));
            return;
        }
        let (x0, x1) = (self.state(i), self.state(i + 1));
        if s == 0.0 {
            out.copy_from_slice(x0);
            return;
        }
        let (m0, m1) = (self.slope(i), self.slope(i + 1));
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let h = self.step;
        for j in 0..self.dim {
            out[j] = h00 * x0[j] + h10 * h * m0[j] + h01 * x1[j] + h11 * h * m1[j];
        }
    }

    /// Evaluates the stored solution at an arbitrary `t` in `[0, horizon]`.
    pub fn sample(&self, t: f64, out: &mut [f64]) {
        self.interpolate((t / self.step).max(0.0), out);
    }

    /// CSV with a `t` column followed by the named state and input columns.
    pub fn to_csv(&self, state_names: &[String], input_names: &[String]) -> String {
        assert_eq!(state_names.len(), self.dim);
        assert_eq!(input_names.len(), self.num_inputs);
        let mut out = String::from("t");
        for name in state_names.iter().chain(input_names) {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&fmt_f64(self.time(k)));
            for v in self.state(k).iter().chain(self.input(k)) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip representation; stable across runs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Number of steps covering `[0, horizon]` with step `h`.
pub fn step_count(horizon: f64, h: f64) -> usize {
    let n = horizon / h;
    let rounded = n.round();
    if (n - rounded).abs() < 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        n.ceil() as usize
    }
}

pub fn check_step(delays: &[f64], h: f64) -> Result<(), DdeError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(DdeError::BadStep(h));
    }
    if let Some(&bad) = delays.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(DdeError::NonPositiveDelay(bad));
    }
    let min_delay = delays.iter().copied().fold(f64::INFINITY, f64::min);
    if h > min_delay / 10.0 * (1.0 + 1e-12) {
        return Err(DdeError::StepTooLarge { step: h, min_delay });
    }
    Ok(())
}

fn fill_delayed<S: DelaySystem + ?Sized>(
    sys: &S,
    trace: &Trace,
    lags: &[f64],
    pos: f64,
    buffers: &mut [Vec<f64>],
) {
    let h = trace.step;
    for (lag, buf) in lags.iter().zip(buffers.iter_mut()) {
        let p = pos - lag;
        if p < 0.0 {
            sys.history(p * h, buf);
        } else {
            trace.interpolate(p, buf);
        }
    }
}

/// Integrates `sys` on the grid `t_k = k h` up to `horizon`.
pub fn integrate<S: DelaySystem + ?Sized>(
    sys: &S,
    horizon: f64,
    h: f64,
) -> Result<Trace, DdeError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(DdeError::BadHorizon(horizon));
    }
    check_step(sys.delays(), h)?;
    let n = sys.dim();
    let steps = step_count(horizon, h);
    let mut trace = Trace::with_capacity(h, n, sys.num_inputs(), steps + 1);
    // lags in units of the step
    let lags: Vec<f64> = sys.delays().iter().map(|d| d / h).collect();
    let mut delayed = vec![vec![0.0; n]; lags.len()];

    let mut x = vec![0.0; n];
    sys.history(0.0, &mut x);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut input = vec![0.0; sys.num_inputs()];

    for k in 0..=steps {
        let t = k as f64 * h;
        let kf = k as f64;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DdeError::NonFinite { time: t });
        }
        fill_delayed(sys, &trace, &lags, kf, &mut delayed);
        sys.rhs(t, &x, &delayed, &mut k1);
        sys.record(t, &x, &delayed, &mut input);
        trace.push(&x, &k1, &input);
        if k == steps {
            break;
        }

        for j in 0..n {
            stage[j] = x[j] + 0.5 * h * k1[j];
        }
        fill_delayed(sys, &trace, &lags, kf + 0.5, &mut delayed);
        sys.rhs(t + 0.5 * h, &stage, &delayed, &mut k2);
        for j in 0..n {
            stage[j] = x[j] + 0.5 * h * k2[j];
        }
        sys.rhs(t + 0.5 * h, &stage, &delayed, &mut k3);
        for j in 0..n {
            stage[j] = x[j] + 1.0 * h * k3[j];
        }
        fill_delayed(sys, &trace, &lags, kf + 1.0, &mut delayed);
        sys.rhs(t + 1.0 * h, &stage, &delayed, &mut k4);
        for j in 0..n {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        sys.project(&mut x);
    }
    Ok(trace)
}

/// Plain RK4 for `x' = f(t, x)` with the same stage arithmetic as
/// [`integrate`]. Used as a reference for delay-free systems.
pub fn integrate_ode<F>(f: F, x0: &[f64], horizon: f64, h: f64) -> Vec<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = x0.len();
    let steps = step_count(horizon, h);
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    for k in 0..=steps {
        out.push(x.clone());
        if k == steps {
            break;
        }
        let t = k as f64 * h;
        f(t, &x, &mut k1);
        for j in 0..n {
            stage[j] = x[j] + 0.5 * h * k1[j];
        }
        f(t + 0.5 * h, &stage, &mut k2);
        for j in 0..n {
            stage[j] = x[j] + 0.5 * h * k2[j];
        }
        f(t + 0.5 * h, &stage, &mut k3);
        for j in 0..n {
            stage[j] = x[j] + 1.0 * h * k3[j];
        }
        f(t + 1.0 * h, &stage, &mut k4);
        for j in 0..n {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    out
}
