//! Outer support-shrinking loop with proximal linearization.
//!
//! Each outer step linearizes the concave outer function of the group penalty at the
//! current iterate, restricts the problem to the current group support and solves the
//! resulting weighted convex problem inexactly with [`AdmmState`]. Groups that the inner
//! solve drives to zero leave the support for good.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmSettings, AdmmState};
use crate::error::{Error, Result};
use crate::model::{
    fidelity, group_support, linf_norm, lp_norm, objective, GroupPartition, GroupedVector, ProblemSpec,
    SupportSet, DEFAULT_ZERO_TOL,
};
use crate::subdiff::{inexactness_certificate, linearization_weights, Certificate};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `c` times the all-ones vector.
    Ones(f64),
    /// i.i.d. standard normal entries from the given seed.
    Gaussian(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Proximal weight used from the second outer step on.
    pub beta: f64,
    /// Inexactness tolerance, in `[0, 1)`.
    pub epsilon: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Inner iteration budget of each ADMM run; a tightening round resumes with a fresh
    /// budget.
    pub max_inner: usize,
    pub zero_tol: f64,
    pub init: Init,
    pub tighten_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 1e-4,
            epsilon: 0.9,
            rho1: 1.0,
            rho2: 1.0,
            outer_tol: 1e-3,
            max_outer: 100,
            eps_abs: 1e-3,
            eps_rel: 1e-3,
            max_inner: 1000,
            zero_tol: DEFAULT_ZERO_TOL,
            init: Init::Ones(1.0),
            tighten_rounds: 3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1), got {}", self.epsilon));
        }
        if !(self.rho1 > 0.0 && self.rho2 > 0.0) {
            return bad("rho1 and rho2 must be positive".into());
        }
        if !(self.outer_tol > 0.0) {
            return bad(format!("outer_tol must be positive, got {}", self.outer_tol));
        }
        if !(self.eps_abs >= 0.0 && self.eps_rel >= 0.0) {
            return bad("inner tolerances must be nonnegative".into());
        }
        if !(self.zero_tol >= 0.0) {
            return bad(format!("zero_tol must be nonnegative, got {}", self.zero_tol));
        }
        if let Init::Ones(c) = self.init {
            if c == 0.0 || !c.is_finite() {
                return bad(format!("ones initialization needs a nonzero constant, got {c}"));
            }
        }
        Ok(())
    }
}

/// Outer iterate together with its support and the linearization weights on that support.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x: GroupedVector,
    pub support: SupportSet,
    /// One weight per group of `support`, in support order.
    pub weights: Vec<f64>,
    pub outer_iter: usize,
    /// Proximal weight applied in the step that starts from this state.
    pub beta: f64,
}

impl IterateState {
    /// Wraps `x` with its exact group support and the linearization weights on it.
    pub fn from_vector(x: GroupedVector, p: f64, q: f64, outer_iter: usize, beta: f64) -> Result<Self> {
        let support = group_support(&x, 0.0);
        let weights = linearization_weights(&x, &support, p, q)?;
        Ok(Self {
            x,
            support,
            weights,
            outer_iter,
            beta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub beta: f64,
    /// Objective at the new iterate.
    pub objective: f64,
    pub support_size: usize,
    pub step_norm: f64,
    pub relative_step: f64,
    pub certificate: Certificate,
    /// Smallest p-norm among the nonzero groups of the new iterate.
    pub min_group_norm: Option<f64>,
    pub inner_iterations: usize,
    pub tighten_rounds: usize,
    pub inner_converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub dual_residual_adjoint: f64,
    pub factorizations: usize,
    /// False when the inner solution failed to decrease the objective and was discarded.
    pub accepted: bool,
    /// `E(new) + (beta/2)(1 - eps)|step|^2 - E(old)` for the accepted iterate.
    pub decrease_gap: f64,
    /// The same quantity for a discarded candidate.
    pub rejected_gap: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RelativeStep,
    ZeroIterate,
    /// A candidate failed to decrease the objective even after tightening.
    NoDescent,
    MaxOuter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub initial_objective: f64,
    pub iterations: Vec<OuterRecord>,
    pub stop_reason: StopReason,
    pub total_time_s: f64,
}

impl RunRecord {
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.iterations.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn converged(&self) -> bool {
        self.stop_reason != StopReason::MaxOuter
    }
}

/// Starting point: all groups active, `beta = 0` for the first step.
pub fn initialize(config: &SolverConfig, partition: &Arc<GroupPartition>, p: f64, q: f64) -> Result<IterateState> {
    let n = partition.len();
    let values = match config.init {
        Init::Ones(c) => {
            if c == 0.0 || !c.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "ones initialization needs a nonzero constant, got {c}"
                )));
            }
            DVector::from_element(n, c)
        }
        Init::Gaussian(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
        }
    };
    let x = GroupedVector::new(values, partition.clone())?;
    IterateState::from_vector(x, p, q, 0, 0.0)
}

/// `sum_{i in S} w_i ||x_i||_p + F_r(x) + (beta/2)||x - x_prev||^2` with `S`, `w` and
/// `x_prev` taken from `prev`.
pub fn linearized_energy(problem: &ProblemSpec, prev: &IterateState, x: &GroupedVector) -> Result<f64> {
    problem.check_vector(x)?;
    let p = problem.p();
    let mut total = fidelity(problem, x)?;
    for (slot, i) in prev.support.iter().enumerate() {
        total += prev.weights[slot] * lp_norm(x.group(i), p);
    }
    total += 0.5 * prev.beta * (x.values() - prev.x.values()).norm_squared();
    Ok(total)
}

fn min_group_norm(x: &GroupedVector, support: &SupportSet, p: f64) -> Option<f64> {
    support
        .iter()
        .map(|i| lp_norm(x.group(i), p))
        .min_by(|a, b| a.total_cmp(b))
}

/// One outer step from `state`; returns the next state and its telemetry.
pub fn outer_step(state: &IterateState, problem: &ProblemSpec, config: &SolverConfig) -> Result<(IterateState, OuterRecord)> {
    let start = Instant::now();
    problem.check_vector(&state.x)?;
    let (p, q) = (problem.p(), problem.q());
    let beta = state.beta;
    let e_old = objective(problem, &state.x)?;

    let mut admm = AdmmState::new(
        problem,
        &state.support,
        &state.weights,
        beta,
        &state.x,
        config.rho1,
        config.rho2,
    )?;
    let mut settings = AdmmSettings {
        eps_abs: config.eps_abs,
        eps_rel: config.eps_rel,
        max_iter: config.max_inner,
    };
    let mut rounds = 0;
    let mut used = 0;
    let (candidate, report, cert, e_new, gap) = loop {
        let report = admm.solve(&settings)?;
        used += report.iterations;

        // z is exactly group sparse, so it is the iterate handed back
        let mut candidate = GroupedVector::scatter(admm.z.as_slice(), &state.support, problem.partition().clone())?;
        for i in state.support.iter() {
            if linf_norm(candidate.group(i)) <= config.zero_tol {
                candidate.group_mut(i).fill(0.0);
            }
        }
        let cert = inexactness_certificate(problem, state, &candidate, beta, config.epsilon)?;
        let e_new = objective(problem, &candidate)?;
        let step_sq = (candidate.values() - state.x.values()).norm_squared();
        let gap = e_new + 0.5 * beta * (1.0 - config.epsilon) * step_sq - e_old;
        // with beta = 0 the bound is zero and no amount of tightening can meet it
        let certified = cert.satisfied || beta == 0.0;
        if (certified && gap <= 0.0) || rounds >= config.tighten_rounds {
            break (candidate, report, cert, e_new, gap);
        }
        rounds += 1;
        settings.eps_abs *= 0.5;
        settings.eps_rel *= 0.5;
    };

    let accepted = gap <= 0.0;
    let (next, objective_value, step_norm, decrease_gap) = if accepted {
        let step_norm = (candidate.values() - state.x.values()).norm();
        let support = group_support(&candidate, 0.0);
        let next = IterateState {
            weights: linearization_weights(&candidate, &support, p, q)?,
            x: candidate,
            support,
            outer_iter: state.outer_iter + 1,
            beta: config.beta,
        };
        (next, e_new, step_norm, gap)
    } else {
        // null step: the iterate stays put
        let mut next = state.clone();
        next.outer_iter += 1;
        next.beta = config.beta;
        (next, e_old, 0.0, 0.0)
    };
    let x_norm = state.x.norm2();
    let record = OuterRecord {
        iteration: state.outer_iter,
        beta,
        objective: objective_value,
        support_size: next.support.len(),
        step_norm,
        relative_step: if x_norm > 0.0 { step_norm / x_norm } else { 0.0 },
        certificate: cert,
        min_group_norm: min_group_norm(&next.x, &next.support, p),
        inner_iterations: used,
        tighten_rounds: rounds,
        inner_converged: report.converged,
        primal_residual: report.primal_residual,
        dual_residual: report.dual_residual,
        dual_residual_adjoint: report.dual_residual_adjoint,
        factorizations: admm.factorizations(),
        accepted,
        decrease_gap,
        rejected_gap: (!accepted).then_some(gap),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((next, record))
}

/// Runs outer steps until the relative step drops to `outer_tol`, a step fails to
/// decrease the objective, or `max_outer` steps ran.
pub fn solve(problem: &ProblemSpec, config: &SolverConfig) -> Result<(GroupedVector, RunRecord)> {
    config.validate()?;
    let start = Instant::now();
    let mut state = initialize(config, problem.partition(), problem.p(), problem.q())?;
    let initial_objective = objective(problem, &state.x)?;
    let mut records = Vec::new();
    let stop_reason = loop {
        if state.support.is_empty() {
            break StopReason::ZeroIterate;
        }
        if records.len() >= config.max_outer {
            break StopReason::MaxOuter;
        }
        let (next, record) = outer_step(&state, problem, config)?;
        let accepted = record.accepted;
        let done = record.relative_step <= config.outer_tol;
        records.push(record);
        state = next;
        if !accepted {
            break StopReason::NoDescent;
        }
        if done {
            break StopReason::RelativeStep;
        }
    };
    Ok((
        state.x,
        RunRecord {
            initial_objective,
            iterations: records,
            stop_reason,
            total_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Exponent;
    use nalgebra::DMatrix;

    fn small_problem(y: Vec<f64>) -> ProblemSpec {
        let a = DMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64 * 0.7).sin() + if i == j { 1.0 } else { 0.0 });
        let part = Arc::new(GroupPartition::new(vec![2, 2]).unwrap());
        ProblemSpec::new(a, DVector::from_vec(y), 0.1, 2.0, 0.5, Exponent::Finite(2.0), part).unwrap()
    }

    #[test]
    fn ones_init() {
        let part = Arc::new(GroupPartition::uniform(2, 2).unwrap());
        let st = initialize(&SolverConfig::default(), &part, 2.0, 0.5).unwrap();
        assert_eq!(st.x.values().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(st.support, SupportSet::full(2));
        assert_eq!(st.beta, 0.0);
    }

    #[test]
    fn zero_constant_rejected() {
        let part = Arc::new(GroupPartition::uniform(2, 2).unwrap());
        let cfg = SolverConfig {
            init: Init::Ones(0.0),
            ..Default::default()
        };
        assert!(initialize(&cfg, &part, 2.0, 0.5).is_err());
    }

    #[test]
    fn gaussian_init_is_deterministic_and_full() {
        let part = Arc::new(GroupPartition::uniform(16, 4).unwrap());
        let cfg = SolverConfig {
            init: Init::Gaussian(7),
            ..Default::default()
        };
        let a = initialize(&cfg, &part, 2.0, 0.5).unwrap();
        let b = initialize(&cfg, &part, 2.0, 0.5).unwrap();
        assert_eq!(a.x.values(), b.x.values());
        assert_eq!(a.support.len(), 16);
    }

    #[test]
    fn zero_data_gives_zero() {
        let prob = small_problem(vec![0.0; 3]);
        let (x, rec) = solve(&prob, &SolverConfig::default()).unwrap();
        assert_eq!(x.norm2(), 0.0);
        assert_eq!(rec.stop_reason, StopReason::ZeroIterate);
    }

    #[test]
    fn config_serde_defaults_and_validation() {
        let cfg: SolverConfig = serde_json::from_str(r#"{"beta": 0.01, "init": {"gaussian": 3}}"#).unwrap();
        assert_eq!(cfg.beta, 0.01);
        assert_eq!(cfg.init, Init::Gaussian(3));
        assert_eq!(cfg.max_outer, 100);
        let bad = SolverConfig {
            epsilon: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn linearized_energy_matches_objective_at_anchor_up_to_constant() {
        let prob = small_problem(vec![0.3, -0.2, 0.5]);
        let x = GroupedVector::from_vec(vec![0.5, -1.0, 0.2, 0.4], prob.partition().clone()).unwrap();
        let st = IterateState::from_vector(x.clone(), 2.0, 0.5, 1, 0.1).unwrap();
        let lin = linearized_energy(&prob, &st, &x).unwrap();
        let fid = fidelity(&prob, &x).unwrap();
        let expected: f64 = fid
            + st
                .support
                .iter()
                .enumerate()
                .map(|(k, i)| st.weights[k] * lp_norm(x.group(i), 2.0))
                .sum::<f64>();
        assert!((lin - expected).abs() < 1e-14);
    }
}
