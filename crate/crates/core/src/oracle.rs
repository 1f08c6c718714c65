//! Slow reference computations for cross-checking the fast paths.
//!
//! Nothing on the solver path calls into this module.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{lp_norm, restrict_columns, Exponent, GroupedVector, ProblemSpec, SupportSet};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Grid search over `[lo, hi]` with `resolution` cells, refined by golden-section search
/// around the best grid point down to a `1e-10` bracket.
pub fn grid_prox_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, resolution: usize) -> f64 {
    assert!(lo <= hi && resolution > 0);
    if lo == hi {
        return lo;
    }
    let h = (hi - lo) / resolution as f64;
    let point = |k: usize| if k == resolution { hi } else { lo + h * k as f64 };
    let mut best = 0;
    let mut best_val = f(lo);
    for k in 1..=resolution {
        let v = f(point(k));
        if v < best_val {
            best = k;
            best_val = v;
        }
    }
    let mut a = point(best.saturating_sub(1));
    let mut b = point((best + 1).min(resolution));
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let refined = 0.5 * (a + b);
    if f(refined) < best_val {
        refined
    } else {
        point(best)
    }
}

/// Minimizes `weight ||z||_p + (rho/2)||z - v||^2` by cyclic exact coordinate
/// minimization on the magnitudes `|z_j| in [0, |v_j|]`, each coordinate found by
/// bisection on its partial derivative. Sweeps stop once no coordinate moves by more
/// than `tol` (scaled by `max |v_j|`).
pub fn coordinate_descent_prox(weight: f64, rho: f64, p: f64, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    if !(p >= 1.0) || !(rho > 0.0) || !(weight >= 0.0) {
        return Err(Error::InvalidParameter("need p >= 1, rho > 0, weight >= 0".into()));
    }
    let target: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    if weight == 0.0 {
        return Ok(v.to_vec());
    }
    let f = |a: &[f64]| {
        let d: f64 = a.iter().zip(&target).map(|(x, t)| (x - t) * (x - t)).sum();
        weight * lp_norm(a, p) + 0.5 * rho * d
    };
    // p-th power of the norm over every coordinate except `j`
    let rest = |a: &[f64], j: usize| -> f64 {
        a.iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, x)| x.powf(p))
            .sum()
    };
    let partial = |t: f64, others: f64, tj: f64| -> f64 {
        let reg = if p == 1.0 || others == 0.0 {
            1.0
        } else if t == 0.0 {
            0.0
        } else {
            let nrm = (others + t.powf(p)).powf(1.0 / p);
            (t / nrm).powf(p - 1.0)
        };
        weight * reg + rho * (t - tj)
    };

    let scale = target.iter().fold(0.0f64, |m, t| m.max(*t)).max(f64::MIN_POSITIVE);
    let mut a = target.clone();
    let mut converged = false;
    let mut last_move = f64::INFINITY;
    for _ in 0..100_000 {
        let mut moved = 0.0f64;
        for j in 0..a.len() {
            let others = rest(&a, j);
            let tj = target[j];
            let next = if partial(0.0, others, tj) >= 0.0 {
                0.0
            } else {
                let (mut lo, mut hi) = (0.0, tj);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if partial(mid, others, tj) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            moved = moved.max((next - a[j]).abs());
            a[j] = next;
        }
        last_move = moved;
        if moved <= tol * scale {
            converged = true;
            break;
        }
    }
    // the regularizer is not differentiable at zero; compare against that point directly
    let zeros = vec![0.0; a.len()];
    let a = if f(&zeros) <= f(&a) { zeros } else { a };
    if !converged && a.iter().any(|x| *x != 0.0) {
        return Err(Error::NoConvergence {
            what: "coordinate descent prox",
            iterations: 100_000,
            residual: last_move,
        });
    }
    Ok(a.iter().zip(v).map(|(m, s)| m * s.signum()).collect())
}

/// Solves the restricted weighted subproblem for `p > 1`, finite `r > 1` by damped Newton,
/// returning the restricted vector.
///
/// Requires every group of `x_prev` on `support` to stay away from zero and (for `r < 2`)
/// nonzero residuals along the path.
pub fn dense_smooth_solve(
    problem: &ProblemSpec,
    support: &SupportSet,
    weights: &[f64],
    beta: f64,
    x_prev: &GroupedVector,
) -> Result<DVector<f64>> {
    let p = problem.p();
    let r = match problem.r() {
        Exponent::Finite(r) if r > 1.0 => r,
        _ => return Err(Error::InvalidParameter("smooth reference needs finite r > 1".into())),
    };
    if p <= 1.0 {
        return Err(Error::InvalidParameter("smooth reference needs p > 1".into()));
    }
    let a_s = restrict_columns(problem.a(), problem.partition(), support)?;
    let part = problem.partition().restrict(support);
    let x0 = x_prev.gather(support);
    let y = problem.y();
    let alpha = problem.alpha();
    let k = x0.len();

    let value = |x: &DVector<f64>| -> f64 {
        let res = &a_s * x - y;
        let fid: f64 = res.iter().map(|t| t.abs().powf(r)).sum::<f64>() / (r * alpha);
        let reg: f64 = (0..part.num_groups())
            .map(|g| weights[g] * lp_norm(&x.as_slice()[part.range(g)], p))
            .sum();
        reg + fid + 0.5 * beta * (x - &x0).norm_squared()
    };
    let derivatives = |x: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let res = &a_s * x - y;
        let d1 = res.map(|t| t.abs().powf(r - 1.0) * t.signum() / alpha);
        let d2 = res.map(|t| (r - 1.0) * t.abs().powf(r - 2.0) / alpha);
        let mut grad = a_s.tr_mul(&d1) + (x - &x0) * beta;
        let mut hess = a_s.tr_mul(&DMatrix::from_diagonal(&d2)) * &a_s;
        for i in 0..k {
            hess[(i, i)] += beta;
        }
        for g in 0..part.num_groups() {
            let range = part.range(g);
            let xi = &x.as_slice()[range.clone()];
            let nu = lp_norm(xi, p);
            let w = weights[g];
            let gi: Vec<f64> = xi.iter().map(|v| (v.abs() / nu).powf(p - 1.0) * v.signum()).collect();
            for (a, ja) in range.clone().enumerate() {
                grad[ja] += w * gi[a];
                for (b, jb) in range.clone().enumerate() {
                    let diag = if a == b { (xi[a].abs() / nu).powf(p - 2.0) } else { 0.0 };
                    hess[(ja, jb)] += w * (p - 1.0) / nu * (diag - gi[a] * gi[b]);
                }
            }
        }
        (grad, hess)
    };

    let mut x = x0.clone();
    let mut fx = value(&x);
    let g0 = derivatives(&x).0.norm().max(1.0);
    for _ in 0..500 {
        let (grad, hess) = derivatives(&x);
        if grad.norm() <= 1e-10 * g0 {
            return Ok(x);
        }
        let chol = hess
            .cholesky()
            .ok_or_else(|| Error::Factorization("reference Hessian is not positive definite".into()))?;
        let dir = -chol.solve(&grad);
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        loop {
            let trial = &x + &dir * t;
            let ft = value(&trial);
            if ft <= fx + 1e-4 * t * slope || t < 1e-12 {
                x = trial;
                fx = ft;
                break;
            }
            t *= 0.5;
        }
    }
    let residual = derivatives(&x).0.norm();
    if residual <= 1e-8 * g0 {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            what: "damped Newton reference",
            iterations: 500,
            residual,
        })
    }
}
