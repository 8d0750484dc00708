//! Primal log-det barrier method for small block-diagonal LMIs.
//!
//! Solves `min cᵀz  s.t.  G_j(z) = C_j + Σ_k z_k F_jk ≻ 0` from a strictly
//! feasible start by following the central path of
//! `s·cᵀz − Σ_j log det G_j(z)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// One symmetric block, affine in the decision vector.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    pub constant: DMatrix<f64>,
    /// Sparse list of `(variable index, coefficient matrix)`.
    pub coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl AffineBlock {
    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut g = self.constant.clone();
        for (k, f) in &self.coeffs {
            if z[*k] != 0.0 {
                g.zip_apply(f, |a, b| *a += z[*k] * b);
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct BarrierProblem {
    pub num_vars: usize,
    pub blocks: Vec<AffineBlock>,
    pub objective: DVector<f64>,
}

impl BarrierProblem {
    /// Barrier parameter: sum of block sizes.
    pub fn degree(&self) -> f64 {
        self.blocks.iter().map(|b| b.size() as f64).sum()
    }

    fn factor(&self, z: &DVector<f64>) -> Option<Vec<Cholesky<f64, Dyn>>> {
        self.blocks.iter().map(|b| Cholesky::new(b.eval(z))).collect()
    }

    fn value(&self, weight: f64, z: &DVector<f64>, chol: &[Cholesky<f64, Dyn>]) -> f64 {
        let logdet: f64 = chol
            .iter()
            .map(|c| 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
            .sum();
        weight * self.objective.dot(z) - logdet
    }

    /// Gradient and Hessian of the barrier objective.
    fn derivatives(
        &self,
        weight: f64,
        chol: &[Cholesky<f64, Dyn>],
    ) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.num_vars;
        let mut grad = &self.objective * weight;
        let mut hess = DMatrix::zeros(m, m);
        for (block, ch) in self.blocks.iter().zip(chol) {
            let n = block.size();
            let l = ch.l();
            let linv = l
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .expect("Cholesky factor is nonsingular");
            let nz = block.coeffs.len();
            // row r holds vec(L⁻¹ F_r L⁻ᵀ)
            let mut w = DMatrix::zeros(nz, n * n);
            for (r, (k, f)) in block.coeffs.iter().enumerate() {
                let wk = &linv * f * linv.transpose();
                grad[*k] -= wk.trace();
                w.row_mut(r).copy_from_slice(wk.as_slice());
            }
            let hb = &w * w.transpose();
            for (r, (kr, _)) in block.coeffs.iter().enumerate() {
                for (c, (kc, _)) in block.coeffs.iter().enumerate() {
                    hess[(*kr, *kc)] += hb[(r, c)];
                }
            }
        }
        (grad, hess)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    /// Factor applied to the objective weight between centering passes.
    pub growth: f64,
    pub initial_weight: f64,
    /// Centering stops once half the squared Newton decrement is below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
    /// Stop once the duality gap bound drops below this.
    pub min_gap: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            growth: 10.0,
            initial_weight: 1.0,
            newton_tol: 1e-9,
            max_newton: 200,
            max_outer: 60,
            min_gap: 1e-15,
        }
    }
}

/// Snapshot handed to the caller after each centering pass.
#[derive(Debug)]
pub struct Progress<'a> {
    pub z: &'a DVector<f64>,
    /// Upper bound on `cᵀz − min cᵀz`.
    pub gap: f64,
    pub outer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    pub z: DVector<f64>,
    pub gap: f64,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    /// True when the monitor asked to stop.
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("starting point is not strictly feasible")]
    InfeasibleStart,
    #[error("line search stalled in centering pass {outer}")]
    LineSearch { outer: usize },
    #[error("centering did not converge in pass {outer}")]
    NewtonLimit { outer: usize },
    #[error("outer iteration limit reached")]
    OuterLimit,
}

fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
    let rhs = -grad;
    if let Some(ch) = Cholesky::new(hess.clone()) {
        return Some(ch.solve(&rhs));
    }
    // Tikhonov fallback for a numerically singular Hessian
    let scale = hess.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 1e-14 * scale;
    while shift < scale {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += shift;
        }
        if let Some(ch) = Cholesky::new(h) {
            return Some(ch.solve(&rhs));
        }
        shift *= 100.0;
    }
    None
}

pub fn solve<F>(
    problem: &BarrierProblem,
    z0: DVector<f64>,
    settings: &BarrierSettings,
    mut monitor: F,
) -> Result<BarrierOutcome, SdpError>
where
    F: FnMut(&Progress) -> Control,
{
    let mut z = z0;
    let mut chol = problem.factor(&z).ok_or(SdpError::InfeasibleStart)?;
    let nu = problem.degree();
    let mut weight = settings.initial_weight;
    let mut newton_total = 0;

    for outer in 0..settings.max_outer {
        let mut converged = false;
        for _ in 0..settings.max_newton {
            let (grad, hess) = problem.derivatives(weight, &chol);
            let step = newton_direction(&grad, &hess).ok_or(SdpError::LineSearch { outer })?;
            let decrement = -grad.dot(&step);
            newton_total += 1;
            if decrement / 2.0 <= settings.newton_tol {
                converged = true;
                break;
            }
            let f0 = problem.value(weight, &z, &chol);
            let mut alpha = 1.0;
            let accepted = loop {
                let trial = &z + &step * alpha;
                if let Some(tc) = problem.factor(&trial) {
                    let f1 = problem.value(weight, &trial, &tc);
                    if f1 <= f0 - 0.01 * alpha * decrement {
                        break Some((trial, tc));
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    break None;
                }
            };
            match accepted {
                Some((trial, tc)) => {
                    z = trial;
                    chol = tc;
                }
                // The decrement is tiny relative to rounding; treat as centred.
                None if decrement < 1e-6 => {
                    converged = true;
                    break;
                }
                None => return Err(SdpError::LineSearch { outer }),
            }
        }
        if !converged {
            return Err(SdpError::NewtonLimit { outer });
        }
        let gap = nu / weight;
        let progress = Progress {
            z: &z,
            gap,
            outer,
        };
        let stop = monitor(&progress) == Control::Stop;
        if stop || gap < settings.min_gap {
            return Ok(BarrierOutcome {
                z,
                gap,
                outer_iterations: outer + 1,
                newton_iterations: newton_total,
                stopped: stop,
            });
        }
        weight *= settings.growth;
    }
    Err(SdpError::OuterLimit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn linear_program_on_an_interval() {
        // min z  s.t. z - 1 > 0, 3 - z > 0
        let problem = BarrierProblem {
            num_vars: 1,
            blocks: vec![
                AffineBlock {
                    constant: scalar(-1.0),
                    coeffs: vec![(0, scalar(1.0))],
                },
                AffineBlock {
                    constant: scalar(3.0),
                    coeffs: vec![(0, scalar(-1.0))],
                },
            ],
            objective: DVector::from_element(1, 1.0),
        };
        let out = solve(&problem, DVector::from_element(1, 2.0), &BarrierSettings::default(), |p| {
            if p.gap < 1e-9 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!((out.z[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn minimises_largest_eigenvalue() {
        // min t  s.t. t·I - A ⪰ 0, λmax(A) = 3
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let problem = BarrierProblem {
            num_vars: 1,
            blocks: vec![AffineBlock {
                constant: -a,
                coeffs: vec![(0, DMatrix::identity(2, 2))],
            }],
            objective: DVector::from_element(1, 1.0),
        };
        let out = solve(&problem, DVector::from_element(1, 10.0), &BarrierSettings::default(), |p| {
            if p.gap < 1e-10 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!((out.z[0] - 3.0).abs() < 1e-8);
        assert!(out.stopped);
    }

    #[test]
    fn rejects_infeasible_start() {
        let problem = BarrierProblem {
            num_vars: 1,
            blocks: vec![AffineBlock {
                constant: scalar(-1.0),
                coeffs: vec![(0, scalar(1.0))],
            }],
            objective: DVector::from_element(1, 1.0),
        };
        let err = solve(&problem, DVector::from_element(1, 0.5), &BarrierSettings::default(), |_| {
            Control::Continue
        })
        .unwrap_err();
        assert_eq!(err, SdpError::InfeasibleStart);
    }
}
