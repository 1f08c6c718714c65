//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use issapl_bench::experiment::{run_experiment, solve_trial, ExperimentPlan, ModelParams};
use issapl_bench::presets;
use issapl_bench::verify::prox_suites;
use issapl_core::datagen::{gen_problem, GenSpec, NoiseKind};
use issapl_core::issapl::{initialize, outer_step, IterateState, SolverConfig, StopReason};
use issapl_core::model::{group_support, objective, Exponent, GroupedVector, SupportSet};
use issapl_core::oracle::grid_prox_1d;
use issapl_core::prox::prox_linf;
use issapl_core::solve;
use issapl_core::subdiff::{linearized_subgradient, stationarity_residual};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    if elapsed.as_secs_f64() <= limit_s as f64 {
        Ok(())
    } else {
        Err(format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
    }
}

fn tight_solver() -> SolverConfig {
    SolverConfig {
        eps_abs: 1e-9,
        eps_rel: 1e-9,
        outer_tol: 1e-8,
        max_inner: 5000,
        ..SolverConfig::default()
    }
}

fn prox_agreement() -> Check {
    let start = Instant::now();
    let suites = prox_suites(1000, 20240601);
    within(start.elapsed(), 60)?;
    let worst = suites.iter().map(|s| s.max_deviation).fold(0.0, f64::max);
    let failed: Vec<String> = suites.iter().filter(|s| !s.passed()).map(|s| s.name.clone()).collect();
    let detail = format!("{} suites x 1000 instances, worst deviation {worst:.2e}", suites.len());
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing: {}", failed.join(", ")))
    }
}

fn linf_worked_cases() -> Check {
    let res = prox_linf(&[1.0, 2.0, 3.0], 1.0).map_err(|e| e.to_string())?;
    let expected = [1.0, 2.0, 2.5];
    let dev = res.s.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if (res.t_star - 2.5).abs() > 1e-12 || dev > 1e-12 {
        return Err(format!("v=(1,2,3): t*={} s={:?}", res.t_star, res.s));
    }
    let profile = |t: f64| t + [1.0f64, 2.0, 3.0].iter().map(|x| (x - t).max(0.0).powi(2)).sum::<f64>();
    let t_grid = grid_prox_1d(profile, 0.0, 3.0, 400);
    if (t_grid - 2.5).abs() > 1e-6 {
        return Err(format!("grid reference level {t_grid}"));
    }
    let zero = prox_linf(&[1.0, 1.0], 0.2).map_err(|e| e.to_string())?;
    if zero.s.iter().any(|x| *x != 0.0) {
        return Err(format!("v=(1,1), beta=0.2: s={:?}", zero.s));
    }
    Ok(format!("t*=2.5, s=(1,2,2.5); grid level {t_grid:.8}; (1,1) -> 0"))
}

struct Trace {
    worst_excess: f64,
    null_steps: usize,
    nesting_ok: bool,
    stabilized: bool,
    steps: usize,
}

/// Runs the outer loop by hand so that every iterate and support can be inspected.
fn trace_run(gen: &GenSpec, model: &ModelParams, solver: &SolverConfig) -> Result<Trace, String> {
    let (problem, _) = gen_problem(gen, model.alpha, model.p, model.q, model.r).map_err(|e| e.to_string())?;
    let mut state: IterateState =
        initialize(solver, problem.partition(), model.p, model.q).map_err(|e| e.to_string())?;
    let mut supports: Vec<SupportSet> = vec![state.support.clone()];
    let mut trace = Trace {
        worst_excess: f64::NEG_INFINITY,
        null_steps: 0,
        nesting_ok: true,
        stabilized: false,
        steps: 0,
    };
    let mut stop = StopReason::MaxOuter;
    for _ in 0..solver.max_outer {
        if state.support.is_empty() {
            stop = StopReason::ZeroIterate;
            break;
        }
        let e_old = objective(&problem, &state.x).map_err(|e| e.to_string())?;
        let (next, record) = outer_step(&state, &problem, solver).map_err(|e| e.to_string())?;
        let e_new = objective(&problem, &next.x).map_err(|e| e.to_string())?;
        let step_sq = (next.x.values() - state.x.values()).norm_squared();
        let lhs = e_new + 0.5 * state.beta * (1.0 - solver.epsilon) * step_sq;
        let excess = (lhs - e_old) / (1.0 + e_old.abs());
        trace.worst_excess = trace.worst_excess.max(excess);
        trace.null_steps += usize::from(!record.accepted);
        trace.nesting_ok &= next.support.is_subset_of(&state.support);
        trace.steps += 1;
        supports.push(next.support.clone());
        state = next;
        if !record.accepted {
            stop = StopReason::NoDescent;
            break;
        }
        if record.relative_step <= solver.outer_tol {
            stop = StopReason::RelativeStep;
            break;
        }
    }
    let k = supports.len();
    trace.stabilized = stop == StopReason::ZeroIterate || (k >= 2 && supports[k - 1] == supports[k - 2]);
    Ok(trace)
}

/// Twenty small instances covering every (p, q, r) combination.
fn descent_instances() -> Vec<(GenSpec, ModelParams, SolverConfig)> {
    let mut combos = Vec::new();
    for p in [1.0, 2.0] {
        for q in [0.3, 0.5, 0.7] {
            for r in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinity] {
                combos.push((p, q, r));
            }
        }
    }
    (0..20)
        .map(|k| {
            let (p, q, r) = combos[k % combos.len()];
            let (alpha, rho1, noise) = match r {
                Exponent::Finite(v) if v == 1.0 => (0.5, 2.0, NoiseKind::Laplace),
                Exponent::Infinity => (0.005, 200.0, NoiseKind::Uniform),
                _ => (0.01, 1.0, NoiseKind::Gaussian),
            };
            let gen = GenSpec {
                rows: 32,
                cols: 128,
                group_size: 4,
                active_groups: 3,
                sigma: 0.01,
                noise,
                seed: 900 + k as u64,
            };
            let solver = SolverConfig {
                rho1,
                ..SolverConfig::default()
            };
            (gen, ModelParams { alpha, p, q, r }, solver)
        })
        .collect()
}

fn descent_traces() -> Result<(Vec<Trace>, Duration), String> {
    let start = Instant::now();
    let traces = descent_instances()
        .iter()
        .map(|(gen, model, solver)| trace_run(gen, model, solver))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((traces, start.elapsed()))
}

fn descent_invariant(traces: &[Trace], elapsed: Duration) -> Check {
    within(elapsed, 300)?;
    let worst = traces.iter().map(|t| t.worst_excess).fold(f64::NEG_INFINITY, f64::max);
    let steps: usize = traces.iter().map(|t| t.steps).sum();
    let nulls: usize = traces.iter().map(|t| t.null_steps).sum();
    let detail = format!(
        "{} instances, {steps} outer steps ({nulls} null), worst relative excess {worst:.2e}",
        traces.len()
    );
    if worst <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn support_nesting(traces: &[Trace]) -> Check {
    let nested = traces.iter().filter(|t| t.nesting_ok).count();
    let stable = traces.iter().filter(|t| t.stabilized).count();
    let detail = format!("nested in {nested}/{0}, stabilized in {stable}/{0}", traces.len());
    if nested == traces.len() && stable == traces.len() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table1_bands() -> Check {
    let start = Instant::now();
    let plan = presets::table1().map_err(|e| e.to_string())?;
    let rows = run_experiment(&plan, false).map_err(|e| e.to_string())?;
    within(start.elapsed(), 600)?;
    let bands = [("8", 0.002, 0.010), ("16", 0.003, 0.013)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, lo, hi) in bands {
        let row = rows.iter().find(|r| r.sweep == label).ok_or(format!("no row for s={label}"))?;
        ok &= (lo..=hi).contains(&row.rel_err_mean);
        parts.push(format!("s={label}: {:.4} in [{lo}, {hi}]", row.rel_err_mean));
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn compare_r_pattern() -> Check {
    let start = Instant::now();
    let suite = presets::compare_r().map_err(|e| e.to_string())?;
    let cells = suite.run(false).map_err(|e| e.to_string())?;
    within(start.elapsed(), 1800)?;
    let wins = cells.iter().filter(|c| c.matched_is_best()).count();
    let cell_text: Vec<String> = cells
        .iter()
        .map(|c| {
            let errs: Vec<String> = c.rows.iter().map(|r| format!("{:.4}", r.rel_err_mean)).collect();
            let mark = if c.matched_is_best() { "+" } else { "-" };
            format!("{mark}{}/s={} [{}]", c.noise, c.active_groups, errs.join(" "))
        })
        .collect();
    let detail = format!(
        "matched r best in {wins}/{} cells (need 10); errors r=1,2,inf: {}",
        cells.len(),
        cell_text.join(", ")
    );
    if wins >= 10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn exact_recovery() -> Check {
    let start = Instant::now();
    let plan = ExperimentPlan {
        gen: GenSpec {
            rows: 64,
            cols: 256,
            group_size: 8,
            active_groups: 1,
            sigma: 0.0,
            noise: NoiseKind::Gaussian,
            seed: 77,
        },
        model: ModelParams {
            alpha: 1e-6,
            p: 2.0,
            q: 0.5,
            r: Exponent::Finite(2.0),
        },
        solver: tight_solver(),
        sweep: issapl_bench::experiment::Sweep::S(vec![1, 2, 3, 4]),
        trials: 20,
        success_threshold: 1e-4,
        overrides: vec![],
    };
    let rows = run_experiment(&plan, false).map_err(|e| e.to_string())?;
    within(start.elapsed(), 120)?;
    let worst = rows.iter().map(|r| r.rel_err_mean).fold(0.0, f64::max);
    let rates: Vec<String> = rows.iter().map(|r| format!("s={}: {}", r.sweep, r.success_rate)).collect();
    let detail = format!("success {}; worst mean error {worst:.2e}", rates.join(", "));
    if rows.iter().all(|r| r.success_rate == 1.0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn stationarity_and_gradient() -> Check {
    let model = ModelParams {
        alpha: 0.003,
        p: 2.0,
        q: 0.5,
        r: Exponent::Finite(2.0),
    };
    let mut worst_stat = 0.0f64;
    for k in 0..5 {
        let gen = GenSpec {
            rows: 64,
            cols: 256,
            group_size: 8,
            active_groups: 4,
            sigma: 0.001,
            noise: NoiseKind::Gaussian,
            seed: 500 + k,
        };
        let (problem, _) = gen_problem(&gen, model.alpha, model.p, model.q, model.r).map_err(|e| e.to_string())?;
        let (x, _) = solve(&problem, &tight_solver()).map_err(|e| e.to_string())?;
        worst_stat = worst_stat.max(stationarity_residual(&problem, &x).map_err(|e| e.to_string())?);
    }

    // central differences of E over the coordinates of groups that stay nonzero
    let gen = GenSpec {
        rows: 24,
        cols: 64,
        group_size: 4,
        active_groups: 3,
        sigma: 0.01,
        noise: NoiseKind::Gaussian,
        seed: 4,
    };
    let (problem, _) = gen_problem(&gen, 0.1, 2.0, 0.5, Exponent::Finite(2.0)).map_err(|e| e.to_string())?;
    let partition = problem.partition().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_grad = 0.0f64;
    for _ in 0..10 {
        let mut values = vec![0.0; partition.len()];
        let active: Vec<usize> = (0..partition.num_groups()).filter(|_| rng.random_bool(0.4)).collect();
        for &i in &active {
            for j in partition.range(i) {
                values[j] = rng.random_range(-2.0..2.0);
            }
        }
        let x = GroupedVector::from_vec(values.clone(), partition.clone()).map_err(|e| e.to_string())?;
        let support = group_support(&x, 0.0);
        if support.is_empty() {
            continue;
        }
        let at = IterateState::from_vector(x.clone(), 2.0, 0.5, 0, 0.0).map_err(|e| e.to_string())?;
        let analytic = linearized_subgradient(&problem, &at, &x, 0.0).map_err(|e| e.to_string())?.total();
        let eval = |v: &[f64]| -> Result<f64, String> {
            let xv = GroupedVector::from_vec(v.to_vec(), partition.clone()).map_err(|e| e.to_string())?;
            objective(&problem, &xv).map_err(|e| e.to_string())
        };
        let coords: Vec<usize> = support.iter().flat_map(|i| partition.range(i)).collect();
        let mut diff_sq = 0.0;
        for (slot, &j) in coords.iter().enumerate() {
            let h = 1e-6 * (1.0 + values[j].abs());
            let mut plus = values.clone();
            let mut minus = values.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
            diff_sq += (fd - analytic[slot]).powi(2);
        }
        worst_grad = worst_grad.max(diff_sq.sqrt() / analytic.norm().max(1e-300));
    }
    let detail = format!("worst stationarity residual {worst_stat:.2e} (<= 1e-2); worst gradient mismatch {worst_grad:.2e} (<= 1e-5)");
    if worst_stat <= 1e-2 && worst_grad <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn q_sweep_trend() -> Check {
    let trials = 50;
    let plan = ExperimentPlan {
        gen: GenSpec {
            rows: 128,
            cols: 512,
            group_size: 8,
            active_groups: 12,
            sigma: 0.001,
            noise: NoiseKind::Gaussian,
            seed: 11,
        },
        model: ModelParams {
            alpha: 0.003,
            p: 2.0,
            q: 0.5,
            r: Exponent::Finite(2.0),
        },
        solver: SolverConfig::default(),
        sweep: issapl_bench::experiment::Sweep::Q(vec![0.1, 0.5, 0.9]),
        trials,
        success_threshold: 0.01,
        overrides: vec![],
    };
    let rows = run_experiment(&plan, false).map_err(|e| e.to_string())?;
    let count = |label: &str| -> Result<usize, String> {
        let row = rows.iter().find(|r| r.sweep == label).ok_or(format!("no row for q={label}"))?;
        Ok((row.success_rate * trials as f64).round() as usize)
    };
    let (low, mid, high) = (count("0.1")?, count("0.5")?, count("0.9")?);
    // ten percentage points of 50 trials
    let slack = trials / 10;
    let detail = format!("s=12, successes out of {trials}: q=0.1 {low}, q=0.5 {mid}, q=0.9 {high}");
    if mid + slack >= low && mid + slack >= high {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scaling_and_factorizations() -> Check {
    let model = ModelParams {
        alpha: 0.003,
        p: 2.0,
        q: 0.5,
        r: Exponent::Finite(2.0),
    };
    let solver = SolverConfig::default();
    let mut mean_time = Vec::new();
    let mut bad_factor_counts = 0;
    let mut steps = 0;
    for (rows, cols, s) in [(128, 512, 8), (256, 1024, 16)] {
        let mut total = 0.0;
        let trials = 5;
        for t in 0..trials {
            let gen = GenSpec {
                rows,
                cols,
                group_size: 8,
                active_groups: s,
                sigma: 0.001,
                noise: NoiseKind::Gaussian,
                seed: 300 + t,
            };
            let (_, _, record, time) = solve_trial(&gen, &model, &solver).map_err(|e| e.to_string())?;
            total += time;
            steps += record.iterations.len();
            bad_factor_counts += record.iterations.iter().filter(|r| r.factorizations != 1).count();
        }
        mean_time.push(total / trials as f64);
    }
    let ratio = mean_time[1] / mean_time[0];
    let detail = format!(
        "mean solve {:.3}s -> {:.3}s, ratio {ratio:.2} (< 8); {bad_factor_counts} of {steps} outer steps with factorizations != 1",
        mean_time[0], mean_time[1]
    );
    if ratio < 8.0 && bad_factor_counts == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, start: Instant, outcome: Check| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {id} {name} ({secs:.1}s): {detail}");
            }
        }
    };

    let t = Instant::now();
    report(1, "prox oracle equivalence", t, prox_agreement());
    let t = Instant::now();
    report(2, "linf prox worked cases", t, linf_worked_cases());
    let t = Instant::now();
    match descent_traces() {
        Ok((traces, elapsed)) => {
            report(3, "descent invariant", t, descent_invariant(&traces, elapsed));
            report(4, "support nesting", t, support_nesting(&traces));
        }
        Err(e) => {
            report(3, "descent invariant", t, Err(e.clone()));
            report(4, "support nesting", t, Err(e));
        }
    }
    let t = Instant::now();
    report(5, "relative error bands at 256x1024", t, table1_bands());
    let t = Instant::now();
    report(6, "fidelity exponent matches noise", t, compare_r_pattern());
    let t = Instant::now();
    report(7, "exact recovery without noise", t, exact_recovery());
    let t = Instant::now();
    report(8, "stationarity and gradient check", t, stationarity_and_gradient());
    let t = Instant::now();
    report(9, "q sweep trend", t, q_sweep_trend());
    let t = Instant::now();
    report(10, "scaling and factorization count", t, scaling_and_factorizations());

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
