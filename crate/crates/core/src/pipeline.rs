//! Scenario pipeline: validate, equilibrium, linearize, synthesize, simulate,
//! detect, report. Each command computes everything first and only then
//! writes its artifacts, each through a temporary file and a rename.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use thiserror::Error;

use crate::dde::fmt_f64;
use crate::lmi::{
    check_certificate, synthesize_gain, verify_gain, GainVerdict, LmiError, SolverStatus, SynthesisResult,
};
use crate::linearizer::{augment, linearize, AugmentedModel, LinearModel, LinearizeError};
use crate::observer::{
    closed_loop, detect_anomalies, error_metrics, AlarmReport, CombinedTrace, ErrorMetrics, MetricsError,
    ObserverError, ObserverInit,
};
use crate::scenario::{check_scenario, load_scenario, LoadedScenario, ScenarioError};
use crate::svg::{Chart, Series};
use crate::topology::{compute_equilibrium, Equilibrium};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Equilibrium,
    Linearize,
    Synthesize,
    Simulate,
    Detect,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Equilibrium => "equilibrium",
            Stage::Linearize => "linearize",
            Stage::Synthesize => "synthesize",
            Stage::Simulate => "simulate",
            Stage::Detect => "detect",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Scenario { stage: Stage, source: ScenarioError },
    #[error("linearize: {0}")]
    Linearize(#[from] LinearizeError),
    #[error("synthesize: {0}")]
    Lmi(#[from] LmiError),
    #[error("synthesize: gain not certified (best achievable margin {upper_bound:e} below epsilon {epsilon:e})")]
    Inconclusive { epsilon: f64, upper_bound: f64 },
    #[error("simulate: {0}")]
    Observer(#[from] ObserverError),
    #[error("detect: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{stage}: {message}")]
    Input { stage: Stage, message: String },
    #[error("write: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Scenario { stage, .. } | PipelineError::Input { stage, .. } => *stage,
            PipelineError::Linearize(_) => Stage::Linearize,
            PipelineError::Lmi(_) | PipelineError::Inconclusive { .. } => Stage::Synthesize,
            PipelineError::Observer(_) => Stage::Simulate,
            PipelineError::Metrics(_) => Stage::Detect,
            PipelineError::Io { .. } => Stage::Write,
        }
    }

    /// 1 validation or I/O, 2 infeasible, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Scenario { .. } | PipelineError::Input { .. } | PipelineError::Io { .. } => 1,
            PipelineError::Lmi(e) => match e {
                LmiError::Infeasible { .. } => 2,
                LmiError::Numerical(_) => 3,
                LmiError::ZeroForwardDelay { .. } | LmiError::GainLength { .. } | LmiError::NonFiniteGain => 1,
            },
            PipelineError::Inconclusive { .. } | PipelineError::Linearize(LinearizeError::Unobservable { .. }) => 2,
            PipelineError::Observer(e) => match e {
                ObserverError::GainLength { .. } | ObserverError::GridMismatch { .. } => 1,
                ObserverError::Plant(_) => 1,
                ObserverError::Integration(_) => 3,
            },
            PipelineError::Metrics(_) => 3,
        }
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub threshold: Option<f64>,
    pub hold: Option<f64>,
    pub step: Option<f64>,
}

/// Loads a scenario, applies the overrides and validates the result.
pub fn prepare(path: &Path, ov: &Overrides) -> Result<LoadedScenario, PipelineError> {
    let wrap = |source| PipelineError::Scenario {
        stage: Stage::Load,
        source,
    };
    let loaded = load_scenario(path).map_err(wrap)?;
    let mut sc = loaded.scenario;
    if let Some(dir) = &ov.output_dir {
        // relative overrides are relative to the caller, not the file
        sc.output_dir = std::env::current_dir()
            .map(|cwd| cwd.join(dir))
            .unwrap_or_else(|_| dir.clone());
    }
    if let Some(e) = ov.epsilon {
        sc.observer.epsilon = e;
    }
    if let Some(t) = ov.threshold {
        sc.observer.threshold = Some(t);
    }
    if let Some(h) = ov.hold {
        sc.observer.hold = h;
    }
    if let Some(h) = ov.step {
        sc.integration.step = h;
    }
    check_scenario(sc, loaded.base_dir).map_err(wrap)
}

/// Named file contents waiting to be written.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file to `<name>.tmp` first and renames once all writes
    /// succeeded.
    pub fn commit(&self, dir: &Path) -> Result<(), PipelineError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PipelineError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut staged = Vec::new();
        for (name, contents) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            if let Err(e) = fs::write(&tmp, contents) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(io(&tmp)(e));
            }
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, dst) in &staged {
            fs::rename(tmp, dst).map_err(io(dst))?;
        }
        Ok(())
    }
}

pub fn equilibrium_csv(cfg: &LoadedScenario, eq: &Equilibrium) -> String {
    let mut out = String::from("source,sessions,fwd_prop,bwd_prop,rate,drop_prob,rtt,fwd_delay,bwd_delay,window\n");
    for (i, (s, e)) in cfg.network.sources().iter().zip(&eq.sources).enumerate() {
        let vals = [
            s.fwd_prop,
            s.bwd_prop,
            e.rate,
            e.drop_prob,
            e.rtt,
            e.fwd_delay,
            e.bwd_delay,
            e.window(),
        ];
        out.push_str(&format!("{},{}", i + 1, s.sessions));
        for v in vals {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn cmd_equilibrium(sc: &LoadedScenario) -> Result<(Equilibrium, Artifacts), PipelineError> {
    let eq = compute_equilibrium(&sc.network);
    let mut art = Artifacts::default();
    art.add("equilibrium.csv", equilibrium_csv(sc, &eq));
    Ok((eq, art))
}

fn coefficients_csv(lin: &LinearModel) -> String {
    let mut out = String::from("source,a,h,f,e\n");
    for (i, k) in lin.coefficients.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            fmt_f64(k.a),
            fmt_f64(k.h),
            fmt_f64(k.f),
            fmt_f64(k.e)
        ));
    }
    out
}

pub fn model_of(sc: &LoadedScenario) -> Result<(Equilibrium, LinearModel, AugmentedModel), PipelineError> {
    let eq = compute_equilibrium(&sc.network);
    let lin = linearize(&eq, &sc.network);
    let aug = augment(&lin)?;
    Ok((eq, lin, aug))
}

pub fn cmd_linearize(sc: &LoadedScenario) -> Result<(AugmentedModel, Artifacts), PipelineError> {
    let (_, lin, aug) = model_of(sc)?;
    let mut art = Artifacts::default();
    art.add("coefficients.csv", coefficients_csv(&lin));
    art.add("model.csv", aug.to_csv());
    Ok((aug, art))
}

/// Synthesises a gain, or certifies the one given in the scenario.
pub fn obtain_gain(sc: &LoadedScenario, aug: &AugmentedModel) -> Result<SynthesisResult, PipelineError> {
    let opts = sc.scenario.observer.synthesis();
    match &sc.scenario.observer.gain {
        None => Ok(synthesize_gain(aug, &opts)?),
        Some(g) => match verify_gain(aug, &DVector::from_column_slice(g), &opts)? {
            GainVerdict::Certified(r) => Ok(r),
            GainVerdict::Inconclusive { upper_bound } => Err(PipelineError::Inconclusive {
                epsilon: opts.epsilon,
                upper_bound,
            }),
        },
    }
}

fn synthesis_report(sc: &LoadedScenario, aug: &AugmentedModel, res: &SynthesisResult) -> String {
    let report = check_certificate(aug, res);
    let mode = if sc.scenario.observer.gain.is_some() { "verify" } else { "synthesize" };
    let status = match res.status {
        SolverStatus::Feasible => "feasible",
        SolverStatus::Optimal => "optimal",
    };
    let mut out = format!(
        "mode = {mode}\nstatus = {status}\nepsilon = {}\ndecay_rate = {}\nmargin = {}\nmin_block_eigenvalue = {}\niterations = {}\n",
        fmt_f64(res.epsilon),
        fmt_f64(res.decay_rate),
        fmt_f64(res.margin),
        fmt_f64(res.min_block_eigenvalue),
        res.iterations
    );
    let gain: Vec<String> = res.gain.iter().map(|v| fmt_f64(*v)).collect();
    out.push_str(&format!("gain = [{}]\n", gain.join(", ")));
    out.push_str(&format!(
        "check = {}\ncheck_threshold = {}\nmin_eig_p = {}\nmin_eig_block = {}\ngain_residual = {}\n",
        if report.passed { "passed" } else { "failed" },
        fmt_f64(report.threshold),
        fmt_f64(report.min_eig_p),
        fmt_f64(report.min_eig_block),
        fmt_f64(report.gain_residual)
    ));
    for f in &report.failures {
        out.push_str(&format!("failure = {f}\n"));
    }
    out
}

fn gain_csv(gain: &DVector<f64>) -> String {
    let mut out = String::from("state,gain\n");
    let n = gain.len() - 2;
    for (i, v) in gain.iter().enumerate() {
        out.push_str(&format!("{},{}\n", state_name(i, n), fmt_f64(*v)));
    }
    out
}

fn state_name(i: usize, n: usize) -> String {
    if i < n {
        format!("x{}", i + 1)
    } else if i == n {
        "b".into()
    } else {
        "d".into()
    }
}

pub fn cmd_synthesize(sc: &LoadedScenario, sdpa: bool) -> Result<(SynthesisResult, Artifacts), PipelineError> {
    let (_, _, aug) = model_of(sc)?;
    let res = obtain_gain(sc, &aug)?;
    let mut art = Artifacts::default();
    art.add("gain.csv", gain_csv(&res.gain));
    art.add("certificate.csv", res.to_csv());
    art.add("synthesis.txt", synthesis_report(sc, &aug, &res));
    if sdpa {
        let problem = crate::lmi::assemble_lmi(&crate::lmi::shift_decay(&aug, res.decay_rate))?;
        art.add("lmi.dat-s", problem.to_sdpa(res.epsilon));
    }
    Ok((res, art))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub gain: DVector<f64>,
    pub alarms: AlarmReport,
    pub metrics: ErrorMetrics,
}

fn plots(trace: &CombinedTrace, alarms: &AlarmReport, stride: usize, art: &mut Artifacts) {
    let pick = |v: Vec<f64>| -> Vec<f64> { v.into_iter().step_by(stride).collect() };
    let times = pick(trace.times());
    let shaded: Vec<(f64, f64)> = alarms.alarms.iter().map(|a| (a.onset, a.clear)).collect();
    let n = trace.num_sources;

    let b = pick(trace.queue());
    let bhat = pick(trace.queue_estimate());
    let chart = Chart {
        title: "Queue length".into(),
        y_label: "packets".into(),
        times: &times,
        series: vec![
            Series {
                label: "b".into(),
                values: &b,
                dashed: false,
            },
            Series {
                label: "b estimate".into(),
                values: &bhat,
                dashed: true,
            },
        ],
        shaded: shaded.clone(),
    };
    art.add("queue.svg", chart.render());

    let rates: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|i| (pick(trace.rate(i)), pick(trace.rate_estimate(i))))
        .collect();
    let mut series = Vec::new();
    for (i, (x, xhat)) in rates.iter().enumerate() {
        series.push(Series {
            label: format!("x{}", i + 1),
            values: x,
            dashed: false,
        });
        series.push(Series {
            label: format!("x{} estimate", i + 1),
            values: xhat,
            dashed: true,
        });
    }
    let chart = Chart {
        title: "Per-connection sending rates".into(),
        y_label: "packets/s".into(),
        times: &times,
        series,
        shaded: shaded.clone(),
    };
    art.add("rates.svg", chart.render());

    let d = pick(trace.anomaly());
    let dhat = pick(trace.anomaly_estimate());
    let chart = Chart {
        title: "Anomalous traffic and alarms".into(),
        y_label: "packets/s".into(),
        times: &times,
        series: vec![
            Series {
                label: "d".into(),
                values: &d,
                dashed: false,
            },
            Series {
                label: "d estimate".into(),
                values: &dhat,
                dashed: true,
            },
        ],
        shaded,
    };
    art.add("anomaly.svg", chart.render());
}

pub fn simulate(sc: &LoadedScenario, gain: &DVector<f64>) -> Result<CombinedTrace, PipelineError> {
    let (eq, _, aug) = model_of(sc)?;
    let obs = &sc.scenario.observer;
    let init = ObserverInit {
        initial: obs.initial.clone(),
        quantize: obs.quantize,
    };
    let integ = &sc.scenario.integration;
    Ok(closed_loop(
        &sc.network,
        &eq,
        sc.scenario.aqm,
        &aug,
        gain,
        &sc.scenario.initial,
        &init,
        integ.horizon,
        integ.step,
    )?)
}

pub fn cmd_run(sc: &LoadedScenario) -> Result<(RunSummary, Artifacts), PipelineError> {
    let (_, _, aug) = model_of(sc)?;
    let res = obtain_gain(sc, &aug)?;
    let trace = simulate(sc, &res.gain)?;
    let times = trace.times();
    let alarms = detect_anomalies(&times, &trace.anomaly_estimate(), sc.threshold(), sc.scenario.observer.hold);
    let metrics = error_metrics(&times, &trace.truth_deviation(), &trace.estimate_deviation())?;
    let n = trace.num_sources;
    let names: Vec<String> = (0..n + 2).map(|i| state_name(i, n)).collect();
    let stride = ((sc.sample_interval() / sc.scenario.integration.step).round() as usize).max(1);

    let mut art = Artifacts::default();
    art.add("trace.csv", trace.to_csv_every(&alarms, stride));
    art.add("alarms.txt", alarms.to_text());
    art.add("metrics.csv", metrics.to_csv(&names));
    art.add("gain.csv", gain_csv(&res.gain));
    art.add("synthesis.txt", synthesis_report(sc, &aug, &res));
    plots(&trace, &alarms, stride, &mut art);
    Ok((
        RunSummary {
            gain: res.gain,
            alarms,
            metrics,
        },
        art,
    ))
}

/// Reads the `t` and `dhat` columns of a trace CSV.
pub fn read_dhat(text: &str) -> Result<(Vec<f64>, Vec<f64>), PipelineError> {
    let bad = |message: String| PipelineError::Input {
        stage: Stage::Detect,
        message,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty CSV".into()))?.split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ti, di) = (col("t")?, col("dhat")?);
    let (mut t, mut d) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let num = |i: usize| -> Result<f64, PipelineError> {
            fields
                .get(i)
                .and_then(|f| f.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: cannot read column {}", k + 2, header[i])))
        };
        t.push(num(ti)?);
        d.push(num(di)?);
    }
    if t.is_empty() {
        return Err(bad("no data rows".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad("time column is not increasing".into()));
    }
    Ok((t, d))
}

pub fn cmd_detect(csv: &Path, threshold: f64, hold: f64) -> Result<(AlarmReport, Artifacts), PipelineError> {
    if !(threshold > 0.0 && hold >= 0.0) {
        return Err(PipelineError::Input {
            stage: Stage::Detect,
            message: "threshold must be positive and hold non-negative".into(),
        });
    }
    let text = fs::read_to_string(csv).map_err(|e| PipelineError::Input {
        stage: Stage::Load,
        message: format!("cannot read {}: {e}", csv.display()),
    })?;
    let (t, d) = read_dhat(&text)?;
    let report = detect_anomalies(&t, &d, threshold, hold);
    let mut art = Artifacts::default();
    art.add("alarms.txt", report.to_text());
    Ok((report, art))
}
