//! Small-signal model around the operating point and its anomaly-augmented
//! form.
//!
//! State ordering: `[δx_1 .. δx_N, δb]`, augmented with `d` as the last entry.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::dde::fmt_f64;
use crate::plant::{fluid_field, FieldPoint};
use crate::topology::{Equilibrium, ValidatedConfig};

/// Per-source partial derivatives of the rate equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceCoefficients {
    /// w.r.t. the current rate
    pub a: f64,
    /// w.r.t. the queue
    pub h: f64,
    /// w.r.t. each delayed arriving rate (times its session count)
    pub f: f64,
    /// w.r.t. the delayed drop probability
    pub e: f64,
}

impl SourceCoefficients {
    pub fn at(rate: f64, rtt: f64, drop_prob: f64, capacity: f64) -> Self {
        let (x, tau, p) = (rate, rtt, drop_prob);
        Self {
            a: -(1.0 - p) / (x * tau * tau) - x * p / 2.0,
            h: -2.0 * (1.0 - p) / (capacity * tau.powi(3)),
            f: -x / (tau * capacity),
            e: -1.0 / (tau * tau) - x * x / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub a_d: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub fwd_delays: Vec<f64>,
    pub bwd_delays: Vec<f64>,
    pub sessions: Vec<f64>,
    pub coefficients: Vec<SourceCoefficients>,
}

impl LinearModel {
    /// Builds the matrices from per-source coefficients.
    pub fn from_coefficients(
        coefficients: Vec<SourceCoefficients>,
        sessions: Vec<f64>,
        fwd_delays: Vec<f64>,
        bwd_delays: Vec<f64>,
    ) -> Self {
        let n = coefficients.len();
        assert_eq!(sessions.len(), n);
        let mut a = DMatrix::zeros(n + 1, n + 1);
        let mut a_d = DMatrix::zeros(n + 1, n + 1);
        let mut b = DMatrix::zeros(n + 1, n);
        for (i, k) in coefficients.iter().enumerate() {
            a[(i, i)] = k.a;
            a[(i, n)] = k.h;
            b[(i, i)] = k.e;
            for (j, eta) in sessions.iter().enumerate() {
                a_d[(i, j)] = k.f * eta;
            }
        }
        for (j, eta) in sessions.iter().enumerate() {
            a_d[(n, j)] = *eta;
        }
        let mut c = DMatrix::zeros(1, n + 1);
        c[(0, n)] = 1.0;
        Self {
            a,
            a_d,
            b,
            c,
            fwd_delays,
            bwd_delays,
            sessions,
            coefficients,
        }
    }

    pub fn num_sources(&self) -> usize {
        self.sessions.len()
    }
}

pub fn linearize(eq: &Equilibrium, cfg: &ValidatedConfig) -> LinearModel {
    let coefficients = eq
        .sources
        .iter()
        .map(|s| SourceCoefficients::at(s.rate, s.rtt, s.drop_prob, cfg.capacity))
        .collect();
    LinearModel::from_coefficients(coefficients, cfg.sessions(), eq.fwd_delays(), eq.bwd_delays())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearizeError {
    #[error("augmented pair is not observable (rank {rank} of {dim})")]
    Unobservable { rank: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a_bar: DMatrix<f64>,
    pub a_d_bar: DMatrix<f64>,
    /// Column split of `a_d_bar`, one matrix per forward delay.
    pub a_d_parts: Vec<DMatrix<f64>>,
    pub b_bar: DMatrix<f64>,
    pub c_bar: DMatrix<f64>,
    pub fwd_delays: Vec<f64>,
    pub bwd_delays: Vec<f64>,
}

impl AugmentedModel {
    pub fn num_sources(&self) -> usize {
        self.a_d_parts.len()
    }

    pub fn dim(&self) -> usize {
        self.a_bar.nrows()
    }

    /// Splits `a_d_bar` by columns; column `i` carries the delay `τ_i^f`.
    pub fn split_columns(a_d_bar: &DMatrix<f64>, n: usize) -> Vec<DMatrix<f64>> {
        (0..n)
            .map(|i| {
                let mut m = DMatrix::zeros(a_d_bar.nrows(), a_d_bar.ncols());
                m.set_column(i, &a_d_bar.column(i));
                m
            })
            .collect()
    }

    /// Rank of the observability matrix of `(Ā + Ā_d, C̄)`. Rows are
    /// normalised first so the test does not depend on the growth of the
    /// matrix powers.
    pub fn observability_rank(&self) -> usize {
        let m = &self.a_bar + &self.a_d_bar;
        let n = self.dim();
        let mut obs = DMatrix::zeros(n, n);
        let mut row = self.c_bar.clone();
        for k in 0..n {
            let norm = row.norm();
            if norm > 0.0 {
                obs.set_row(k, &(row.row(0) / norm));
            }
            row = &row * &m;
        }
        let sv = obs.singular_values();
        let top = sv.max();
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|s| **s > top * 1e-10).count()
    }

    /// Eigenvalues of `Ā - L C̄ + Σ Ā_di`, the zero-delay error dynamics.
    pub fn error_matrix(&self, gain: &DVector<f64>) -> DMatrix<f64> {
        &self.a_bar - gain * &self.c_bar + &self.a_d_bar
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut block = |name: &str, m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                out.push_str(name);
                for c in 0..m.ncols() {
                    out.push(',');
                    out.push_str(&fmt_f64(m[(r, c)]));
                }
                out.push('\n');
            }
        };
        block("A_bar", &self.a_bar);
        block("Ad_bar", &self.a_d_bar);
        block("B_bar", &self.b_bar.transpose());
        block("C_bar", &self.c_bar);
        out.push_str("fwd_delays");
        for d in &self.fwd_delays {
            out.push(',');
            out.push_str(&fmt_f64(*d));
        }
        out.push_str("\nbwd_delays");
        for d in &self.bwd_delays {
            out.push(',');
            out.push_str(&fmt_f64(*d));
        }
        out.push('\n');
        out
    }
}

/// Appends the disturbance state `d`, which feeds the queue equation.
pub fn augment(lin: &LinearModel) -> Result<AugmentedModel, LinearizeError> {
    let n = lin.num_sources();
    let dim = n + 2;
    let mut a_bar = DMatrix::zeros(dim, dim);
    a_bar.view_mut((0, 0), (n + 1, n + 1)).copy_from(&lin.a);
    a_bar[(n, n + 1)] = 1.0;
    let mut a_d_bar = DMatrix::zeros(dim, dim);
    a_d_bar.view_mut((0, 0), (n + 1, n + 1)).copy_from(&lin.a_d);
    let mut b_bar = DMatrix::zeros(dim, n);
    b_bar.view_mut((0, 0), (n + 1, n)).copy_from(&lin.b);
    let mut c_bar = DMatrix::zeros(1, dim);
    c_bar.view_mut((0, 0), (1, n + 1)).copy_from(&lin.c);
    let aug = AugmentedModel {
        a_d_parts: AugmentedModel::split_columns(&a_d_bar, n),
        a_bar,
        a_d_bar,
        b_bar,
        c_bar,
        fwd_delays: lin.fwd_delays.clone(),
        bwd_delays: lin.bwd_delays.clone(),
    };
    let rank = aug.observability_rank();
    if rank < dim {
        return Err(LinearizeError::Unobservable { rank, dim });
    }
    Ok(aug)
}

/// Finite-difference Jacobian of the unconstrained vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct FdJacobian {
    /// w.r.t. `(x(t), b(t))`
    pub a: DMatrix<f64>,
    /// w.r.t. the forward-delayed rates `x_j(t - τ_j^f)`, padded with a zero
    /// queue column
    pub a_d: DMatrix<f64>,
    /// w.r.t. `p_i(t - τ_i^b)`
    pub b: DMatrix<f64>,
    /// w.r.t. the round-trip-delayed own rate `x_i(t - τ_i)`
    pub rtt_delayed: DMatrix<f64>,
}

/// Central differences of the vector field at the operating point, each
/// argument perturbed by `h_step · max(|v|, 1)`.
pub fn fd_jacobian(cfg: &ValidatedConfig, eq: &Equilibrium, h_step: f64) -> FdJacobian {
    let n = cfg.num_sources();
    let base = FieldPoint::at_equilibrium(eq);
    let column = |perturb: &dyn Fn(&mut FieldPoint, f64), v: f64| -> Vec<f64> {
        let dv = h_step * v.abs().max(1.0);
        let mut hi = base.clone();
        perturb(&mut hi, dv);
        let mut lo = base.clone();
        perturb(&mut lo, -dv);
        let fh = fluid_field(cfg, &hi, 0.0);
        let fl = fluid_field(cfg, &lo, 0.0);
        fh.iter().zip(&fl).map(|(a, b)| (a - b) / (2.0 * dv)).collect()
    };
    let mut a = DMatrix::zeros(n + 1, n + 1);
    let mut a_d = DMatrix::zeros(n + 1, n + 1);
    let mut b = DMatrix::zeros(n + 1, n);
    let mut rtt_delayed = DMatrix::zeros(n + 1, n);
    for j in 0..n {
        let col = column(&|p, dv| p.rates[j] += dv, base.rates[j]);
        a.set_column(j, &DVector::from_vec(col));
        let col = column(&|p, dv| p.rates_fwd[j] += dv, base.rates_fwd[j]);
        a_d.set_column(j, &DVector::from_vec(col));
        let col = column(&|p, dv| p.drops_bwd[j] += dv, base.drops_bwd[j]);
        b.set_column(j, &DVector::from_vec(col));
        let col = column(&|p, dv| p.rates_rtt[j] += dv, base.rates_rtt[j]);
        rtt_delayed.set_column(j, &DVector::from_vec(col));
    }
    let col = column(&|p, dv| p.queue += dv, base.queue);
    a.set_column(n, &DVector::from_vec(col));
    FdJacobian {
        a,
        a_d,
        b,
        rtt_delayed,
    }
}
