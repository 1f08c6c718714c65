//! Experiment plans: a generation template, model parameters, solver settings and one
//! swept axis, run over independently seeded trials.

use std::time::Instant;

use issapl_core::datagen::{derive_seed, gen_problem, GenSpec, NoiseKind};
use issapl_core::issapl::{solve, RunRecord, SolverConfig};
use issapl_core::model::{group_support, Exponent, GroupedVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::results::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub r: Exponent,
}

/// The swept axis and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Number of nonzero groups.
    S(Vec<usize>),
    R(Vec<Exponent>),
    /// Group size.
    N(Vec<usize>),
    Q(Vec<f64>),
    P(Vec<f64>),
    Sigma(Vec<f64>),
    Alpha(Vec<f64>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::S(v) | Sweep::N(v) => v.len(),
            Sweep::R(v) => v.len(),
            Sweep::Q(v) | Sweep::P(v) | Sweep::Sigma(v) | Sweep::Alpha(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Short name of the swept quantity.
    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::S(_) => "s",
            Sweep::R(_) => "r",
            Sweep::N(_) => "n",
            Sweep::Q(_) => "q",
            Sweep::P(_) => "p",
            Sweep::Sigma(_) => "sigma",
            Sweep::Alpha(_) => "alpha",
        }
    }

    pub fn label(&self, i: usize) -> String {
        match self {
            Sweep::S(v) | Sweep::N(v) => v[i].to_string(),
            Sweep::R(v) => v[i].to_string(),
            Sweep::Q(v) | Sweep::P(v) | Sweep::Sigma(v) | Sweep::Alpha(v) => v[i].to_string(),
        }
    }

    fn apply(&self, i: usize, gen: &mut GenSpec, model: &mut ModelParams) {
        match self {
            Sweep::S(v) => gen.active_groups = v[i],
            Sweep::R(v) => model.r = v[i],
            Sweep::N(v) => gen.group_size = v[i],
            Sweep::Q(v) => model.q = v[i],
            Sweep::P(v) => model.p = v[i],
            Sweep::Sigma(v) => gen.sigma = v[i],
            Sweep::Alpha(v) => model.alpha = v[i],
        }
    }
}

/// Parameter changes applied to every sweep point matching the given filters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Override {
    pub r: Option<Exponent>,
    pub noise: Option<NoiseKind>,
    pub alpha: Option<f64>,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
}

impl Override {
    fn matches(&self, gen: &GenSpec, model: &ModelParams) -> bool {
        self.r.is_none_or(|r| r == model.r) && self.noise.is_none_or(|n| n == gen.noise)
    }
}

fn default_success_threshold() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Template for every trial; its seed is the base seed of the plan.
    pub gen: GenSpec,
    pub model: ModelParams,
    #[serde(default)]
    pub solver: SolverConfig,
    pub sweep: Sweep,
    pub trials: usize,
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

/// Fully resolved settings of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSetup {
    pub label: String,
    pub gen: GenSpec,
    pub model: ModelParams,
    pub solver: SolverConfig,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(BenchError::Plan("trials must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(BenchError::Plan("sweep has no points".into()));
        }
        for i in 0..self.sweep.len() {
            let point = self.point(i);
            point.gen.validate()?;
            point.solver.validate()?;
        }
        Ok(())
    }

    pub fn point(&self, i: usize) -> PointSetup {
        let mut gen = self.gen.clone();
        let mut model = self.model;
        let mut solver = self.solver.clone();
        self.sweep.apply(i, &mut gen, &mut model);
        let matching: Vec<&Override> = self.overrides.iter().filter(|o| o.matches(&gen, &model)).collect();
        for o in matching {
            if let Some(a) = o.alpha {
                model.alpha = a;
            }
            if let Some(v) = o.rho1 {
                solver.rho1 = v;
            }
            if let Some(v) = o.rho2 {
                solver.rho2 = v;
            }
        }
        PointSetup {
            label: self.sweep.label(i),
            gen,
            model,
            solver,
        }
    }

    /// Seed of a trial; shared by all sweep points so that points are compared on the
    /// same draws where the generator settings agree.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.gen.seed, trial as u64)
    }
}

/// `||x - x_or|| / ||x_or||`.
pub fn relative_error(x: &GroupedVector, x_or: &GroupedVector) -> Result<f64> {
    let denom = x_or.norm2();
    if denom == 0.0 {
        return Err(BenchError::ZeroGroundTruth);
    }
    if x.values().len() != x_or.values().len() {
        return Err(BenchError::Plan("solution and ground truth differ in length".into()));
    }
    Ok((x.values() - x_or.values()).norm() / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub rel_err: f64,
    pub time_s: f64,
    pub outer_iters: usize,
    pub support: usize,
    pub failed: bool,
}

/// Generates and solves one instance; wall time covers the solve only.
pub fn solve_trial(gen: &GenSpec, model: &ModelParams, solver: &SolverConfig) -> Result<(GroupedVector, GroupedVector, RunRecord, f64)> {
    let (problem, x_or) = gen_problem(gen, model.alpha, model.p, model.q, model.r)?;
    let start = Instant::now();
    let (x, record) = solve(&problem, solver)?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok((x, x_or, record, elapsed))
}

fn run_trial(point: &PointSetup, seed: u64) -> TrialOutcome {
    let mut gen = point.gen.clone();
    gen.seed = seed;
    let outcome = solve_trial(&gen, &point.model, &point.solver)
        .and_then(|(x, x_or, record, time_s)| Ok((relative_error(&x, &x_or)?, record, time_s, x)));
    match outcome {
        Ok((rel_err, record, time_s, x)) => TrialOutcome {
            rel_err,
            time_s,
            outer_iters: record.outer_iterations(),
            support: group_support(&x, 0.0).len(),
            failed: false,
        },
        Err(e) => {
            eprintln!("trial {} at {} failed: {e}", seed, point.label);
            TrialOutcome {
                rel_err: 1.0,
                time_s: 0.0,
                outer_iters: 0,
                support: 0,
                failed: true,
            }
        }
    }
}

/// Per-trial outcomes in `(point, trial)` order.
pub fn run_trials(plan: &ExperimentPlan) -> Result<Vec<Vec<TrialOutcome>>> {
    plan.validate()?;
    let points: Vec<PointSetup> = (0..plan.sweep.len()).map(|i| plan.point(i)).collect();
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|i| (0..plan.trials).map(move |t| (i, t)))
        .map(|(i, t)| (i, plan.trial_seed(t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs.par_iter().map(|&(i, seed)| run_trial(&points[i], seed)).collect();
    Ok(outcomes.chunks(plan.trials).map(|c| c.to_vec()).collect())
}

pub fn aggregate(label: String, trials: &[TrialOutcome], success_threshold: f64, timing: bool) -> ResultRow {
    let k = trials.len() as f64;
    let mean = |f: &dyn Fn(&TrialOutcome) -> f64| trials.iter().map(f).sum::<f64>() / k;
    ResultRow {
        sweep: label,
        rel_err_mean: mean(&|t| t.rel_err),
        success_rate: trials.iter().filter(|t| !t.failed && t.rel_err < success_threshold).count() as f64 / k,
        time_mean_s: if timing { mean(&|t| t.time_s) } else { 0.0 },
        outer_iters_mean: mean(&|t| t.outer_iters as f64),
        support_mean: mean(&|t| t.support as f64),
    }
}

/// Runs every trial of every sweep point and aggregates one row per point. With `timing`
/// off the time column is zero, which makes the output a pure function of the plan.
pub fn run_experiment(plan: &ExperimentPlan, timing: bool) -> Result<Vec<ResultRow>> {
    let per_point = run_trials(plan)?;
    Ok(per_point
        .iter()
        .enumerate()
        .map(|(i, trials)| aggregate(plan.sweep.label(i), trials, plan.success_threshold, timing))
        .collect())
}
