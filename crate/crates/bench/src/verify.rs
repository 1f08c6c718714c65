//! Randomized agreement checks between the proximal operators and the slow references.

use issapl_core::model::Exponent;
use issapl_core::oracle::{grid_prox_1d, coordinate_descent_prox};
use issapl_core::prox::{prox_fidelity_into, prox_group_into, prox_linf, prox_weighted_l1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub instances: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Instances where the operator or its reference returned an error.
    pub errors: usize,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.errors == 0 && self.max_deviation <= self.tolerance
    }
}

const GRID: usize = 400;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_vec(rng: &mut ChaCha8Rng, max_len: usize, scale: f64) -> Vec<f64> {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

struct Tally {
    name: String,
    instances: usize,
    worst: f64,
    errors: usize,
    tolerance: f64,
}

impl Tally {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances: 0,
            worst: 0.0,
            errors: 0,
            tolerance,
        }
    }

    fn record(&mut self, dev: Option<f64>) {
        self.instances += 1;
        match dev {
            Some(d) if d.is_finite() => self.worst = self.worst.max(d),
            _ => self.errors += 1,
        }
    }

    fn finish(self) -> SuiteOutcome {
        SuiteOutcome {
            name: self.name,
            instances: self.instances,
            max_deviation: self.worst,
            tolerance: self.tolerance,
            errors: self.errors,
        }
    }
}

pub fn weighted_l1_suite(instances: usize, seed: u64, tol: f64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("weighted l1", tol);
    for _ in 0..instances {
        let v = rng.random_range(-3.0..3.0);
        let w = rng.random_range(0.0..2.0);
        let rho = rng.random_range(0.2..3.0);
        let f = |t: f64| w * t.abs() + 0.5 * rho * (t - v) * (t - v);
        let r = v.abs() + 1.0;
        let reference = grid_prox_1d(f, -r, r, GRID);
        tally.record(Some((prox_weighted_l1(v, w, rho) - reference).abs()));
    }
    tally.finish()
}

pub fn group_lp_suite(p: f64, instances: usize, seed: u64, tol: f64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(format!("group l{p}"), tol);
    for _ in 0..instances {
        let v = random_vec(&mut rng, 6, 3.0);
        let w = rng.random_range(0.0..2.0);
        let rho = rng.random_range(0.2..3.0);
        let mut out = vec![0.0; v.len()];
        let fast = prox_group_into(&v, w, rho, p, &mut out).map(|_| out);
        let reference = coordinate_descent_prox(w, rho, p, &v, 1e-12);
        tally.record(match (fast, reference) {
            (Ok(a), Ok(b)) => Some(max_abs_diff(&a, &b)),
            _ => None,
        });
    }
    tally.finish()
}

pub fn fidelity_suite(r: f64, instances: usize, seed: u64, tol: f64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(format!("fidelity r={r}"), tol);
    for _ in 0..instances {
        let v = random_vec(&mut rng, 6, 3.0);
        let alpha = rng.random_range(0.1..3.0);
        let rho1 = rng.random_range(0.2..3.0);
        let mut fast = vec![0.0; v.len()];
        let ok = prox_fidelity_into(&v, alpha, rho1, Exponent::Finite(r), &mut fast).is_ok();
        let reference: Vec<f64> = v
            .iter()
            .map(|&vj| {
                let f = |t: f64| t.abs().powf(r) / (r * alpha) + 0.5 * rho1 * (t - vj) * (t - vj);
                let b = vj.abs() + 1.0;
                grid_prox_1d(f, -b, b, GRID)
            })
            .collect();
        tally.record(ok.then(|| max_abs_diff(&fast, &reference)));
    }
    tally.finish()
}

/// `min ||s||_inf + beta ||s - v||^2` against a grid search over the level `t = ||s||_inf`.
pub fn linf_suite(instances: usize, seed: u64, tol: f64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("linf", tol);
    for _ in 0..instances {
        let v = random_vec(&mut rng, 8, 3.0);
        let beta = rng.random_range(0.05..3.0);
        let top = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let profile = |t: f64| {
            t + beta
                * v.iter()
                    .map(|x| (x.abs() - t).max(0.0).powi(2))
                    .sum::<f64>()
        };
        let t = grid_prox_1d(profile, 0.0, top, GRID);
        let reference: Vec<f64> = v.iter().map(|x| x.clamp(-t, t)).collect();
        tally.record(prox_linf(&v, beta).ok().map(|res| max_abs_diff(&res.s, &reference)));
    }
    tally.finish()
}

/// Every prox-versus-reference suite, `instances` draws each.
pub fn prox_suites(instances: usize, seed: u64) -> Vec<SuiteOutcome> {
    let tol = 1e-6;
    let mut out = vec![weighted_l1_suite(instances, seed, tol)];
    for (k, p) in [1.0, 2.0, 1.5, 3.0].into_iter().enumerate() {
        out.push(group_lp_suite(p, instances, seed.wrapping_add(10 + k as u64), tol));
    }
    for (k, r) in [1.0, 1.5, 2.0, 4.0].into_iter().enumerate() {
        out.push(fidelity_suite(r, instances, seed.wrapping_add(20 + k as u64), tol));
    }
    out.push(linf_suite(instances, seed.wrapping_add(30), tol));
    out
}
