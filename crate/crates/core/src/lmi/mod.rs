//! Delay-dependent observer synthesis.
//!
//! The gain `L = P⁻¹X` is certified by a block LMI in symmetric `P`, `Q_i`,
//! `S_i` (one pair per forward delay) and a column `X`. Feasibility is decided
//! by maximising a common margin `t` with every block `⪰ t·I` under the
//! normalisation `Σ trace ≤ 1`, so `t` is a scale-free measure and the strict
//! inequalities become `t ≥ ε`.

pub mod sdp;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dde::fmt_f64;
use crate::linearizer::AugmentedModel;
use sdp::{AffineBlock, BarrierProblem, BarrierSettings, Control};

pub const DEFAULT_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmiError {
    #[error("forward delay of source {index} is not positive")]
    ZeroForwardDelay { index: usize },
    #[error("gain has {got} entries, model needs {expected}")]
    GainLength { expected: usize, got: usize },
    #[error("gain is not finite")]
    NonFiniteGain,
    #[error("LMI infeasible at epsilon {epsilon:e} (best achievable margin below {upper_bound:e})")]
    Infeasible { epsilon: f64, upper_bound: f64 },
    #[error("solver failure: {0}")]
    Numerical(String),
}

/// Decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub p: DMatrix<f64>,
    pub q: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    pub x: DVector<f64>,
}

impl Certificate {
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            p: &self.p * alpha,
            q: self.q.iter().map(|m| m * alpha).collect(),
            s: self.s.iter().map(|m| m * alpha).collect(),
            x: &self.x * alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum GainMode {
    Free,
    Fixed(DVector<f64>),
}

/// The LMI for one augmented model. In fixed-gain mode `X = P·L` and the
/// problem is linear in `(P, Q_i, S_i)` only.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    model: AugmentedModel,
    mode: GainMode,
}

fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

fn sym_from(z: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for r in 0..n {
        for c in r..n {
            m[(r, c)] = z[k];
            m[(c, r)] = z[k];
            k += 1;
        }
    }
    m
}

fn check_delays(aug: &AugmentedModel) -> Result<(), LmiError> {
    match aug.fwd_delays.iter().position(|d| !(*d > 0.0 && d.is_finite())) {
        Some(index) => Err(LmiError::ZeroForwardDelay { index }),
        None => Ok(()),
    }
}

pub fn assemble_lmi(aug: &AugmentedModel) -> Result<LmiProblem, LmiError> {
    check_delays(aug)?;
    Ok(LmiProblem {
        model: aug.clone(),
        mode: GainMode::Free,
    })
}

/// The problem obtained by substituting `X = P·L`.
pub fn assemble_fixed_gain(aug: &AugmentedModel, gain: &DVector<f64>) -> Result<LmiProblem, LmiError> {
    check_delays(aug)?;
    if gain.len() != aug.dim() {
        return Err(LmiError::GainLength {
            expected: aug.dim(),
            got: gain.len(),
        });
    }
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(LmiError::NonFiniteGain);
    }
    Ok(LmiProblem {
        model: aug.clone(),
        mode: GainMode::Fixed(gain.clone()),
    })
}

impl LmiProblem {
    pub fn model(&self) -> &AugmentedModel {
        &self.model
    }

    /// Side of the state matrices, `N + 2`.
    pub fn state_dim(&self) -> usize {
        self.model.dim()
    }

    pub fn num_sources(&self) -> usize {
        self.model.num_sources()
    }

    /// Side of the main block, `(2N+1)(N+2)`.
    pub fn block_dim(&self) -> usize {
        (2 * self.num_sources() + 1) * self.state_dim()
    }

    pub fn num_variables(&self) -> usize {
        let n = self.state_dim();
        let sym = (2 * self.num_sources() + 1) * sym_len(n);
        match self.mode {
            GainMode::Free => sym + n,
            GainMode::Fixed(_) => sym,
        }
    }

    pub fn certificate_from(&self, z: &[f64]) -> Certificate {
        let n = self.state_dim();
        let ns = self.num_sources();
        let sl = sym_len(n);
        let p = sym_from(&z[..sl], n);
        let q = (0..ns)
            .map(|i| sym_from(&z[sl * (1 + i)..sl * (2 + i)], n))
            .collect();
        let s = (0..ns)
            .map(|i| sym_from(&z[sl * (1 + ns + i)..sl * (2 + ns + i)], n))
            .collect();
        let x = match &self.mode {
            GainMode::Free => DVector::from_column_slice(&z[sl * (1 + 2 * ns)..]),
            GainMode::Fixed(l) => &p * l,
        };
        Certificate { p, q, s, x }
    }

    /// The main LMI block at a given certificate.
    pub fn evaluate(&self, cert: &Certificate) -> DMatrix<f64> {
        let m = &self.model;
        let n = self.state_dim();
        let ns = self.num_sources();
        let nb = 2 * ns + 1;
        let p = &cert.p;
        let xc = &cert.x * &m.c_bar;
        let pa = p * &m.a_bar;
        let mut out = DMatrix::zeros(nb * n, nb * n);
        let mut put = |br: usize, bc: usize, blk: &DMatrix<f64>| {
            let mut v = out.view_mut((br * n, bc * n), (n, n));
            v += blk;
        };

        let mut psi = -&pa - pa.transpose() + &xc + xc.transpose();
        for q in &cert.q {
            psi -= q;
        }
        put(0, 0, &psi);
        let y0 = (&pa - &xc).transpose();
        for i in 0..ns {
            let pad = p * &m.a_d_parts[i];
            let corner = p * 2.0 - &cert.s[i];
            let b = i + 1;
            put(0, 0, &corner);
            put(0, b, &(-&pad - &corner));
            put(b, 0, &(-pad.transpose() - &corner));
            put(b, b, &(&cert.q[i] + &corner));
        }
        for j in 0..ns {
            let col = ns + 1 + j;
            put(0, col, &y0);
            put(col, 0, &y0.transpose());
            for i in 0..ns {
                let yi = (p * &m.a_d_parts[i]).transpose();
                put(i + 1, col, &yi);
                put(col, i + 1, &yi.transpose());
            }
            let tau = m.fwd_delays[j];
            put(col, col, &(&cert.s[j] / (tau * tau)));
        }
        out
    }

    /// All constrained blocks: main LMI, `P`, each `Q_i`, each `S_i`.
    pub fn blocks(&self, cert: &Certificate) -> Vec<DMatrix<f64>> {
        let mut out = vec![self.evaluate(cert), cert.p.clone()];
        out.extend(cert.q.iter().cloned());
        out.extend(cert.s.iter().cloned());
        out
    }

    fn block_names(&self) -> Vec<String> {
        let ns = self.num_sources();
        let mut names = vec!["LMI block".to_string(), "P".to_string()];
        names.extend((1..=ns).map(|i| format!("Q{i}")));
        names.extend((1..=ns).map(|i| format!("S{i}")));
        names
    }

    /// Coefficient matrices of every block with respect to every variable.
    fn coefficient_blocks(&self) -> Vec<Vec<(usize, DMatrix<f64>)>> {
        let m = self.num_variables();
        let mut per_block: Vec<Vec<(usize, DMatrix<f64>)>> = Vec::new();
        let mut unit = vec![0.0; m];
        for k in 0..m {
            unit[k] = 1.0;
            let blocks = self.blocks(&self.certificate_from(&unit));
            unit[k] = 0.0;
            if per_block.is_empty() {
                per_block = vec![Vec::new(); blocks.len()];
            }
            for (j, b) in blocks.into_iter().enumerate() {
                if b.iter().any(|v| *v != 0.0) {
                    per_block[j].push((k, b));
                }
            }
        }
        per_block
    }

    /// Sparse text export: `min cᵀz s.t. Σ_k z_k F_k − F_0 ⪰ 0` with
    /// `F_0 = ε·I` on every block. Entries are `matrix block row col value`
    /// (1-based, upper triangle); matrix 0 is `F_0`.
    pub fn to_sdpa(&self, epsilon: f64) -> String {
        let coeffs = self.coefficient_blocks();
        let sizes: Vec<usize> = self
            .blocks(&self.certificate_from(&vec![0.0; self.num_variables()]))
            .iter()
            .map(|b| b.nrows())
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "\"observer gain LMI, {} sources", self.num_sources());
        let _ = writeln!(out, "{}", self.num_variables());
        let _ = writeln!(out, "{}", sizes.len());
        let _ = writeln!(
            out,
            "{}",
            sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
        );
        let _ = writeln!(out, "{}", vec!["0"; self.num_variables()].join(" "));
        for (j, size) in sizes.iter().enumerate() {
            for i in 0..*size {
                let _ = writeln!(out, "0 {} {} {} {}", j + 1, i + 1, i + 1, fmt_f64(epsilon));
            }
        }
        let mut entries = Vec::new();
        for (j, list) in coeffs.iter().enumerate() {
            for (k, f) in list {
                for r in 0..f.nrows() {
                    for c in r..f.ncols() {
                        if f[(r, c)] != 0.0 {
                            entries.push((*k + 1, j + 1, r + 1, c + 1, f[(r, c)]));
                        }
                    }
                }
            }
        }
        entries.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
        for (k, j, r, c, v) in entries {
            let _ = writeln!(out, "{k} {j} {r} {c} {}", fmt_f64(v));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximise the common margin only.
    #[default]
    Feasibility,
    /// After a feasible point is found, minimise `trace(P)` with every block
    /// kept above a fixed margin.
    MinTraceP,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateScaling {
    #[default]
    None,
    /// Osborne-style balancing of `|Ā| + |Ā_d|`.
    Balance,
    /// Explicit diagonal `T` with `x = T·x̃`.
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub epsilon: f64,
    /// Requested exponential decay rate `α ≥ 0` of the error dynamics.
    pub decay_rate: f64,
    pub objective: Objective,
    pub scaling: StateScaling,
    pub solver: BarrierSettings,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            decay_rate: 0.0,
            objective: Objective::Feasibility,
            scaling: StateScaling::None,
            solver: BarrierSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Feasible,
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub gain: DVector<f64>,
    pub certificate: Certificate,
    pub status: SolverStatus,
    /// Smallest eigenvalue over all blocks divided by the certificate scale.
    pub margin: f64,
    /// Smallest eigenvalue of the main LMI block.
    pub min_block_eigenvalue: f64,
    pub epsilon: f64,
    pub decay_rate: f64,
    /// `‖P·L − X‖ / ‖X‖`
    pub gain_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainVerdict {
    Certified(SynthesisResult),
    /// No certificate at this margin. The condition is only sufficient, so
    /// this says nothing about instability.
    Inconclusive { upper_bound: f64 },
}

/// `Ā → Ā + αI`, `Ā_di → e^{α τ_i} Ā_di`: a certificate for the shifted
/// model bounds the error by `e^{−αt}`.
pub fn shift_decay(aug: &AugmentedModel, alpha: f64) -> AugmentedModel {
    if alpha == 0.0 {
        return aug.clone();
    }
    let mut out = aug.clone();
    for i in 0..out.dim() {
        out.a_bar[(i, i)] += alpha;
    }
    for (part, tau) in out.a_d_parts.iter_mut().zip(&aug.fwd_delays) {
        *part *= (alpha * tau).exp();
    }
    out.a_d_bar = out
        .a_d_parts
        .iter()
        .fold(DMatrix::zeros(aug.dim(), aug.dim()), |acc, m| acc + m);
    out
}

/// Similarity transform `x = T·x̃` with diagonal `T`.
fn scale_model(aug: &AugmentedModel, t: &DVector<f64>) -> AugmentedModel {
    let tm = DMatrix::from_diagonal(t);
    let ti = DMatrix::from_diagonal(&t.map(|v| 1.0 / v));
    let sim = |m: &DMatrix<f64>| &ti * m * &tm;
    AugmentedModel {
        a_bar: sim(&aug.a_bar),
        a_d_bar: sim(&aug.a_d_bar),
        a_d_parts: aug.a_d_parts.iter().map(sim).collect(),
        b_bar: &ti * &aug.b_bar,
        c_bar: &aug.c_bar * &tm,
        fwd_delays: aug.fwd_delays.clone(),
        bwd_delays: aug.bwd_delays.clone(),
    }
}

fn unscale_certificate(cert: &Certificate, t: &DVector<f64>) -> Certificate {
    let ti = DMatrix::from_diagonal(&t.map(|v| 1.0 / v));
    let back = |m: &DMatrix<f64>| &ti * m * &ti;
    Certificate {
        p: back(&cert.p),
        q: cert.q.iter().map(back).collect(),
        s: cert.s.iter().map(back).collect(),
        x: &ti * &cert.x,
    }
}

/// Diagonal balancing factors, clamped to `[1e-3, 1e3]`.
pub fn balance_factors(aug: &AugmentedModel) -> DVector<f64> {
    let n = aug.dim();
    let m = aug.a_bar.abs() + aug.a_d_bar.abs();
    let mut d = DVector::from_element(n, 1.0);
    for _ in 0..50 {
        let mut changed = false;
        for i in 0..n {
            let (mut row, mut col) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    row += m[(i, j)] * d[j] / d[i];
                    col += m[(j, i)] * d[i] / d[j];
                }
            }
            if row == 0.0 || col == 0.0 {
                continue;
            }
            let f = (col / row).sqrt();
            let next = (d[i] / f).clamp(1e-3, 1e3);
            if (next / d[i] - 1.0).abs() > 1e-3 {
                changed = true;
            }
            d[i] = next;
        }
        if !changed {
            break;
        }
    }
    // x̃ = D x, so T = D⁻¹
    d.map(|v| 1.0 / v)
}

fn scaling_factors(aug: &AugmentedModel, scaling: &StateScaling) -> Option<DVector<f64>> {
    match scaling {
        StateScaling::None => None,
        StateScaling::Balance => Some(balance_factors(aug)),
        StateScaling::Diagonal(v) => Some(DVector::from_vec(v.clone())),
    }
}

fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues
}

/// Smallest eigenvalue of each block and the sum of absolute eigenvalues
/// (the trace for positive semidefinite blocks).
fn block_spectrum(blocks: &[DMatrix<f64>]) -> (Vec<f64>, f64) {
    let mut mins = Vec::with_capacity(blocks.len());
    let mut scale = 0.0;
    for b in blocks {
        let ev = symmetric_eigenvalues(b);
        mins.push(ev.min());
        scale += ev.iter().map(|v| v.abs()).sum::<f64>();
    }
    (mins, scale)
}

enum PhaseOne {
    Feasible { z: DVector<f64>, margin: f64, iterations: usize },
    Infeasible { upper_bound: f64 },
}

/// Maximise `t` s.t. every block `⪰ t·I` and `Σ trace ≤ 1`.
fn phase_one(problem: &LmiProblem, epsilon: f64, settings: &BarrierSettings) -> Result<PhaseOne, LmiError> {
    let m = problem.num_variables();
    let coeffs = problem.coefficient_blocks();
    let zero = problem.blocks(&problem.certificate_from(&vec![0.0; m]));
    let mut blocks = Vec::new();
    let mut trace_row = Vec::new();
    for (j, list) in coeffs.into_iter().enumerate() {
        let size = zero[j].nrows();
        for (k, f) in &list {
            trace_row.push((*k, f.trace()));
        }
        let mut list = list;
        list.push((m, -DMatrix::identity(size, size)));
        blocks.push(AffineBlock {
            constant: DMatrix::zeros(size, size),
            coeffs: list,
        });
    }
    let mut tr = vec![0.0; m];
    for (k, v) in trace_row {
        tr[k] += v;
    }
    blocks.push(AffineBlock {
        constant: DMatrix::from_element(1, 1, 1.0),
        coeffs: tr
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (k, DMatrix::from_element(1, 1, -v)))
            .collect(),
    });
    let mut objective = DVector::zeros(m + 1);
    objective[m] = -1.0;
    let bp = BarrierProblem {
        num_vars: m + 1,
        blocks,
        objective,
    };
    let mut z0 = DVector::zeros(m + 1);
    z0[m] = -1.0;

    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut verdict = None;
    let run = sdp::solve(&bp, z0, settings, |p| {
        let t = p.z[m];
        if t >= epsilon {
            best = Some((p.z.clone(), t));
            if p.gap <= 0.1 * t {
                verdict = Some(true);
                return Control::Stop;
            }
        } else if t + p.gap < epsilon {
            verdict = Some(false);
            return Control::Stop;
        }
        Control::Continue
    });
    let (iterations, last_gap, last_t) = match &run {
        Ok(out) => (out.newton_iterations, out.gap, out.z[m]),
        Err(_) => (0, f64::INFINITY, f64::NAN),
    };
    match (verdict, best) {
        (Some(false), _) => Ok(PhaseOne::Infeasible {
            upper_bound: last_t + last_gap,
        }),
        (_, Some((z, t))) => Ok(PhaseOne::Feasible {
            z: z.rows(0, m).into_owned(),
            margin: t,
            iterations,
        }),
        _ => match run {
            Err(e) => Err(LmiError::Numerical(e.to_string())),
            Ok(_) => Err(LmiError::Numerical(format!(
                "undecided: margin {last_t:e} with gap {last_gap:e}"
            ))),
        },
    }
}

/// Minimise `trace(P)` keeping every block `⪰ I`, starting from a phase-one
/// point rescaled so every block is `⪰ 2I`.
fn phase_two(problem: &LmiProblem, z1: &DVector<f64>, margin: f64, settings: &BarrierSettings) -> Option<DVector<f64>> {
    let m = problem.num_variables();
    let n = problem.state_dim();
    let coeffs = problem.coefficient_blocks();
    let zero = problem.blocks(&problem.certificate_from(&vec![0.0; m]));
    let start = z1 * (2.0 / margin);
    let start_trace: f64 = problem
        .blocks(&problem.certificate_from(start.as_slice()))
        .iter()
        .map(|b| b.trace())
        .sum();
    let mut tr = vec![0.0; m];
    let mut blocks = Vec::new();
    for (j, list) in coeffs.into_iter().enumerate() {
        let size = zero[j].nrows();
        for (k, f) in &list {
            tr[*k] += f.trace();
        }
        blocks.push(AffineBlock {
            constant: -DMatrix::identity(size, size),
            coeffs: list,
        });
    }
    blocks.push(AffineBlock {
        constant: DMatrix::from_element(1, 1, 10.0 * start_trace),
        coeffs: tr
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (k, DMatrix::from_element(1, 1, -v)))
            .collect(),
    });
    let mut objective = DVector::zeros(m);
    // diagonal entries of P
    let mut k = 0;
    for r in 0..n {
        objective[k] = 1.0;
        k += n - r;
    }
    let bp = BarrierProblem {
        num_vars: m,
        blocks,
        objective,
    };
    let out = sdp::solve(&bp, start, settings, |p| {
        let obj = bp.objective.dot(p.z);
        if p.gap <= 1e-4 * obj.abs().max(1.0) {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .ok()?;
    Some(out.z)
}

fn finish(
    problem: &LmiProblem,
    cert: Certificate,
    epsilon: f64,
    decay_rate: f64,
    status: SolverStatus,
    iterations: usize,
) -> Result<SynthesisResult, LmiError> {
    let blocks = problem.blocks(&cert);
    let (mins, scale) = block_spectrum(&blocks);
    // report on the unit-trace scale
    let cert = cert.scaled(1.0 / scale);
    let margin = mins.iter().copied().fold(f64::INFINITY, f64::min) / scale;
    let chol = nalgebra::Cholesky::new(cert.p.clone())
        .ok_or_else(|| LmiError::Numerical("P is not positive definite".into()))?;
    let gain = match &problem.mode {
        GainMode::Free => chol.solve(&cert.x),
        GainMode::Fixed(l) => l.clone(),
    };
    let gain_residual = (&cert.p * &gain - &cert.x).norm() / cert.x.norm().max(f64::MIN_POSITIVE);
    Ok(SynthesisResult {
        gain,
        certificate: cert,
        status,
        margin,
        min_block_eigenvalue: mins[0] / scale,
        epsilon,
        decay_rate,
        gain_residual,
        iterations,
    })
}

fn solve_problem(
    aug: &AugmentedModel,
    gain: Option<&DVector<f64>>,
    opts: &SynthesisOptions,
) -> Result<Result<SynthesisResult, f64>, LmiError> {
    check_delays(aug)?;
    let shifted = shift_decay(aug, opts.decay_rate);
    let t = scaling_factors(&shifted, &opts.scaling);
    let work = match &t {
        Some(t) => scale_model(&shifted, t),
        None => shifted.clone(),
    };
    let problem = match gain {
        None => assemble_lmi(&work)?,
        Some(l) => {
            let lt = match &t {
                Some(t) => l.component_div(t),
                None => l.clone(),
            };
            assemble_fixed_gain(&work, &lt)?
        }
    };
    let (z, margin, iterations) = match phase_one(&problem, opts.epsilon, &opts.solver)? {
        PhaseOne::Infeasible { upper_bound } => return Ok(Err(upper_bound)),
        PhaseOne::Feasible { z, margin, iterations } => (z, margin, iterations),
    };
    let mut status = SolverStatus::Feasible;
    let z = match opts.objective {
        Objective::Feasibility => z,
        Objective::MinTraceP => match phase_two(&problem, &z, margin, &opts.solver) {
            Some(z2) => {
                status = SolverStatus::Optimal;
                z2
            }
            None => z,
        },
    };
    let mut cert = problem.certificate_from(z.as_slice());
    if let Some(t) = &t {
        cert = unscale_certificate(&cert, t);
    }
    // judge the certificate on the unscaled problem
    let original = match gain {
        None => assemble_lmi(&shifted)?,
        Some(l) => assemble_fixed_gain(&shifted, l)?,
    };
    let result = finish(&original, cert, opts.epsilon, opts.decay_rate, status, iterations)?;
    if result.margin < opts.epsilon / 2.0 {
        return Err(LmiError::Numerical(format!(
            "certificate margin {:e} lost after mapping back",
            result.margin
        )));
    }
    Ok(Ok(result))
}

pub fn synthesize_gain(aug: &AugmentedModel, opts: &SynthesisOptions) -> Result<SynthesisResult, LmiError> {
    match solve_problem(aug, None, opts)? {
        Ok(r) => Ok(r),
        Err(upper_bound) => Err(LmiError::Infeasible {
            epsilon: opts.epsilon,
            upper_bound,
        }),
    }
}

pub fn verify_gain(
    aug: &AugmentedModel,
    gain: &DVector<f64>,
    opts: &SynthesisOptions,
) -> Result<GainVerdict, LmiError> {
    if gain.len() != aug.dim() {
        return Err(LmiError::GainLength {
            expected: aug.dim(),
            got: gain.len(),
        });
    }
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(LmiError::NonFiniteGain);
    }
    Ok(match solve_problem(aug, Some(gain), opts)? {
        Ok(r) => GainVerdict::Certified(r),
        Err(upper_bound) => GainVerdict::Inconclusive { upper_bound },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub min_eig_p: f64,
    pub min_eig_q: Vec<f64>,
    pub min_eig_s: Vec<f64>,
    pub min_eig_block: f64,
    /// Sum of absolute eigenvalues over all blocks.
    pub scale: f64,
    /// `ε/2 · scale`
    pub threshold: f64,
    pub gain_residual: f64,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Re-assembles the LMI from the stored certificate and checks every block.
pub fn check_certificate(aug: &AugmentedModel, result: &SynthesisResult) -> CertificateReport {
    let shifted = shift_decay(aug, result.decay_rate);
    let problem = LmiProblem {
        model: shifted,
        mode: GainMode::Free,
    };
    let blocks = problem.blocks(&result.certificate);
    let (mins, scale) = block_spectrum(&blocks);
    let threshold = result.epsilon / 2.0 * scale;
    let mut failures = Vec::new();
    for (name, min) in problem.block_names().iter().zip(&mins) {
        if !(*min >= threshold) {
            failures.push(format!("{name} not positive definite (min eigenvalue {min:e})"));
        }
    }
    let cert = &result.certificate;
    let gain_residual = (&cert.p * &result.gain - &cert.x).norm() / cert.x.norm().max(f64::MIN_POSITIVE);
    if !(gain_residual < 1e-8) {
        failures.push(format!("gain does not match P⁻¹X (residual {gain_residual:e})"));
    }
    let ns = problem.num_sources();
    CertificateReport {
        min_eig_block: mins[0],
        min_eig_p: mins[1],
        min_eig_q: mins[2..2 + ns].to_vec(),
        min_eig_s: mins[2 + ns..].to_vec(),
        scale,
        threshold,
        gain_residual,
        passed: failures.is_empty(),
        failures,
    }
}

impl SynthesisResult {
    /// Gain and certificate as plain text, one named row per matrix row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, name: &str, vals: &mut dyn Iterator<Item = f64>| {
            out.push_str(name);
            for v in vals {
                out.push(',');
                out.push_str(&fmt_f64(v));
            }
            out.push('\n');
        };
        row(&mut out, "L", &mut self.gain.iter().copied());
        let c = &self.certificate;
        row(&mut out, "X", &mut c.x.iter().copied());
        let mat = |out: &mut String, name: &str, m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                row(out, name, &mut m.row(r).iter().copied());
            }
        };
        mat(&mut out, "P", &c.p);
        for (i, q) in c.q.iter().enumerate() {
            mat(&mut out, &format!("Q{}", i + 1), q);
        }
        for (i, s) in c.s.iter().enumerate() {
            mat(&mut out, &format!("S{}", i + 1), s);
        }
        out
    }
}
