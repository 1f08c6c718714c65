//! Scaled ADMM for the weighted convex subproblem on the active support
//!
//! ```text
//! min  sum_i w_i ||z_i||_p + f_r(s) + (beta/2) ||x - x_prev||^2
//! s.t. z = x,  s = A_S x - y
//! ```
//!
//! Each iteration runs the separable `(z, s)` prox pass, then the `x` solve against a
//! Cholesky factor of `rho1 A_S^T A_S + (rho2 + beta) I` computed once in
//! [`AdmmState::new`], then the scaled multiplier updates.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fidelity_of_residual, lp_norm, restrict_columns, Exponent, GroupPartition, GroupedVector, ProblemSpec, SupportSet};
use crate::prox::{prox_fidelity_into, prox_group_into};

const TRACE_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-3,
            eps_rel: 1e-3,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmReport {
    pub iterations: usize,
    /// `||[A_S x - y - s; x - z]||`.
    pub primal_residual: f64,
    /// `||diag(rho1, rho2) [A_S; I] (x_new - x_old)||`, the quantity used for stopping.
    pub dual_residual: f64,
    /// `||(rho1 A_S^T A_S + rho2 I)(x_new - x_old)||`, the constraint-adjoint variant.
    pub dual_residual_adjoint: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub converged: bool,
    /// Subproblem objective at `x` over the last few iterations.
    pub objective_trace: Vec<f64>,
}

enum SystemFactor {
    Empty,
    /// Cholesky of the `k x k` system matrix.
    Direct(Cholesky<f64, Dyn>),
    /// Cholesky of `shift I + rho1 A_S A_S^T` (`M x M`) used through the matrix inversion
    /// identity when the support is wider than `M`.
    Woodbury { small: Cholesky<f64, Dyn>, shift: f64 },
}

pub struct AdmmState {
    a_s: DMatrix<f64>,
    y: DVector<f64>,
    aty: DVector<f64>,
    partition: GroupPartition,
    weights: Vec<f64>,
    x_prev: DVector<f64>,
    beta: f64,
    alpha: f64,
    p: f64,
    r: Exponent,
    rho1: f64,
    rho2: f64,
    factor: SystemFactor,
    factorizations: usize,
    total_iterations: usize,

    pub x_bar: DVector<f64>,
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
    ax: DVector<f64>,

    last_dx: DVector<f64>,
    last_adx: DVector<f64>,
    trace: VecDeque<f64>,
}

/// Residuals of one step, before comparison with the tolerances.
#[derive(Debug, Clone, Copy)]
pub struct StepResiduals {
    pub primal: f64,
    pub dual: f64,
}

impl AdmmState {
    /// Builds `A_S`, factors the system matrix and starts from `x = x_prev` restricted to
    /// `support`, `z = x`, `s = A_S x - y`, zero multipliers.
    pub fn new(
        problem: &ProblemSpec,
        support: &SupportSet,
        weights: &[f64],
        beta: f64,
        x_prev: &GroupedVector,
        rho1: f64,
        rho2: f64,
    ) -> Result<Self> {
        problem.check_vector(x_prev)?;
        if weights.len() != support.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} support groups",
                weights.len(),
                support.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("weights must be positive, got {w}")));
        }
        if !(rho1 > 0.0 && rho2 > 0.0) {
            return Err(Error::InvalidParameter("ADMM penalties must be positive".into()));
        }
        if !(beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
        }

        let a_s = restrict_columns(problem.a(), problem.partition(), support)?;
        let partition = problem.partition().restrict(support);
        let y = problem.y().clone();
        let aty = a_s.tr_mul(&y);
        let x_bar = x_prev.gather(support);
        let ax = &a_s * &x_bar;
        let s = &ax - &y;
        let k = x_bar.len();
        let m = y.len();

        let mut state = Self {
            a_s,
            y,
            aty,
            partition,
            weights: weights.to_vec(),
            x_prev: x_bar.clone(),
            beta,
            alpha: problem.alpha(),
            p: problem.p(),
            r: problem.r(),
            rho1,
            rho2,
            factor: SystemFactor::Empty,
            factorizations: 0,
            total_iterations: 0,
            z: x_bar.clone(),
            x_bar,
            s,
            lambda: DVector::zeros(m),
            mu: DVector::zeros(k),
            ax,
            last_dx: DVector::zeros(k),
            last_adx: DVector::zeros(m),
            trace: VecDeque::with_capacity(TRACE_LEN),
        };
        state.factor()?;
        Ok(state)
    }

    fn factor(&mut self) -> Result<()> {
        let (m, k) = self.a_s.shape();
        let shift = self.rho2 + self.beta;
        self.factor = if k == 0 {
            SystemFactor::Empty
        } else if k <= m {
            let mut sys = self.a_s.tr_mul(&self.a_s) * self.rho1;
            for i in 0..k {
                sys[(i, i)] += shift;
            }
            self.factorizations += 1;
            SystemFactor::Direct(
                Cholesky::new(sys).ok_or_else(|| Error::Factorization("system matrix is not SPD".into()))?,
            )
        } else {
            let mut small = (&self.a_s * self.a_s.transpose()) * self.rho1;
            for i in 0..m {
                small[(i, i)] += shift;
            }
            self.factorizations += 1;
            SystemFactor::Woodbury {
                small: Cholesky::new(small)
                    .ok_or_else(|| Error::Factorization("reduced system matrix is not SPD".into()))?,
                shift,
            }
        };
        Ok(())
    }

    /// Solves `(rho1 A_S^T A_S + (rho2 + beta) I) x = rhs` with the cached factor.
    pub fn solve_system(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            SystemFactor::Empty => DVector::zeros(0),
            SystemFactor::Direct(chol) => chol.solve(rhs),
            SystemFactor::Woodbury { small, shift } => {
                let w = small.solve(&(&self.a_s * rhs));
                (rhs - self.a_s.tr_mul(&w) * self.rho1) / *shift
            }
        }
    }

    /// The dense system matrix; for diagnostics and tests.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let k = self.a_s.ncols();
        self.a_s.tr_mul(&self.a_s) * self.rho1 + DMatrix::identity(k, k) * (self.rho2 + self.beta)
    }

    /// Number of factorizations performed over the life of this state.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    pub fn total_iterations(&self) -> usize {
        self.total_iterations
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn restricted_matrix(&self) -> &DMatrix<f64> {
        &self.a_s
    }

    /// `A_S x` for the current `x`.
    pub fn ax(&self) -> &DVector<f64> {
        &self.ax
    }

    /// Subproblem objective `sum_i w_i ||x_i||_p + f_r(A_S x - y) + (beta/2)||x - x_prev||^2`.
    pub fn subproblem_objective(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.a_s * x;
        self.objective_with_ax(x, &ax)
    }

    fn objective_with_ax(&self, x: &DVector<f64>, ax: &DVector<f64>) -> f64 {
        let mut reg = 0.0;
        for (slot, w) in self.weights.iter().enumerate() {
            reg += w * lp_norm(&x.as_slice()[self.partition.range(slot)], self.p);
        }
        let res = ax - &self.y;
        reg + fidelity_of_residual(res.as_slice(), self.alpha, self.r)
            + 0.5 * self.beta * (x - &self.x_prev).norm_squared()
    }

    /// One scaled-ADMM iteration.
    pub fn step(&mut self) -> Result<StepResiduals> {
        // z-update, group by group
        let vz = &self.x_bar + &self.mu;
        for (slot, &w) in self.weights.iter().enumerate() {
            let range = self.partition.range(slot);
            prox_group_into(
                &vz.as_slice()[range.clone()],
                w,
                self.rho2,
                self.p,
                &mut self.z.as_mut_slice()[range],
            )?;
        }

        // s-update
        let vs = &self.ax - &self.y + &self.lambda;
        prox_fidelity_into(vs.as_slice(), self.alpha, self.rho1, self.r, self.s.as_mut_slice())?;

        // x-update
        let mut rhs = &self.aty + self.a_s.tr_mul(&(&self.s - &self.lambda));
        rhs *= self.rho1;
        rhs.axpy(self.rho2, &(&self.z - &self.mu), 1.0);
        rhs.axpy(self.beta, &self.x_prev, 1.0);
        let x_new = self.solve_system(&rhs);
        let ax_new = &self.a_s * &x_new;

        let r_s = &ax_new - &self.y - &self.s;
        let r_z = &x_new - &self.z;
        self.lambda += &r_s;
        self.mu += &r_z;

        self.last_dx = &x_new - &self.x_bar;
        self.last_adx = &ax_new - &self.ax;
        self.x_bar = x_new;
        self.ax = ax_new;
        self.total_iterations += 1;

        let primal = (r_s.norm_squared() + r_z.norm_squared()).sqrt();
        let dual = ((self.rho1 * self.rho1) * self.last_adx.norm_squared()
            + (self.rho2 * self.rho2) * self.last_dx.norm_squared())
        .sqrt();

        if self.trace.len() == TRACE_LEN {
            self.trace.pop_front();
        }
        self.trace.push_back(self.objective_with_ax(&self.x_bar, &self.ax));
        Ok(StepResiduals { primal, dual })
    }

    fn tolerances(&self, settings: &AdmmSettings) -> (f64, f64) {
        let dim = ((self.y.len() + self.x_bar.len()) as f64).sqrt();
        let ax_hat = (self.ax.norm_squared() + self.x_bar.norm_squared()).sqrt();
        let s_hat = (self.s.norm_squared() + self.z.norm_squared()).sqrt();
        let primal = dim * settings.eps_abs + settings.eps_rel * ax_hat.max(self.y.norm()).max(s_hat);
        let dual_scale = ((self.rho1 * self.rho1) * self.lambda.norm_squared()
            + (self.rho2 * self.rho2) * self.mu.norm_squared())
        .sqrt();
        let dual = dim * settings.eps_abs + settings.eps_rel * dual_scale;
        (primal, dual)
    }

    /// Iterates until both stacked residual tests hold or `max_iter` steps were taken.
    /// Calling again resumes from the current iterates.
    pub fn solve(&mut self, settings: &AdmmSettings) -> Result<AdmmReport> {
        if self.x_bar.is_empty() {
            return Ok(AdmmReport {
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                dual_residual_adjoint: 0.0,
                primal_tol: 0.0,
                dual_tol: 0.0,
                converged: true,
                objective_trace: Vec::new(),
            });
        }
        let mut iterations = 0;
        let mut last = StepResiduals {
            primal: f64::INFINITY,
            dual: f64::INFINITY,
        };
        let mut tols = (0.0, 0.0);
        let mut converged = false;
        while iterations < settings.max_iter {
            last = self.step()?;
            iterations += 1;
            tols = self.tolerances(settings);
            if last.primal <= tols.0 && last.dual <= tols.1 {
                converged = true;
                break;
            }
        }
        let adjoint = self.a_s.tr_mul(&self.last_adx) * self.rho1 + &self.last_dx * self.rho2;
        Ok(AdmmReport {
            iterations,
            primal_residual: last.primal,
            dual_residual: last.dual,
            dual_residual_adjoint: adjoint.norm(),
            primal_tol: tols.0,
            dual_tol: tols.1,
            converged,
            objective_trace: self.trace.iter().copied().collect(),
        })
    }
}
