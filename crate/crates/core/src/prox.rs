//! Proximal operators for the ADMM `z`- and `s`-updates.
//!
//! Group operators solve `min_z weight * ||z||_p + (rho/2) ||z - v||^2`; fidelity operators
//! solve `min_s f_r(s) + (rho1/2) ||s - v||^2` with `f_r` the fidelity term written on the
//! residual.

use crate::error::{Error, Result};
use crate::model::{lp_norm, Exponent};

const NEWTON_MAX_ITER: usize = 100;

/// Scalar soft threshold `sgn(v) * max(|v| - weight/rho, 0)`.
pub fn prox_weighted_l1(v: f64, weight: f64, rho: f64) -> f64 {
    let mag = v.abs() - weight / rho;
    if mag > 0.0 {
        mag.copysign(v)
    } else {
        0.0
    }
}

/// Group shrinkage `max(||v|| - weight/rho, 0) * v / ||v||`.
pub fn prox_weighted_group_l2(v: &[f64], weight: f64, rho: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    prox_weighted_group_l2_into(v, weight, rho, &mut out);
    out
}

pub fn prox_weighted_group_l2_into(v: &[f64], weight: f64, rho: f64, out: &mut [f64]) {
    let nrm = lp_norm(v, 2.0);
    let shrunk = nrm - weight / rho;
    if shrunk <= 0.0 || nrm == 0.0 {
        out.fill(0.0);
    } else {
        let scale = shrunk / nrm;
        for (o, x) in out.iter_mut().zip(v) {
            *o = scale * x;
        }
    }
}

/// Minimizer of `weight * ||z||_p + (rho/2) ||z - v||^2` for `p > 1`.
///
/// The minimizer shares the signs of `v`. Writing `nu = ||z||_p`, each magnitude solves
/// `a + c a^{p-1} = |v_j|` with `c = weight / (rho nu^{p-1})`; the outer equation
/// `||a(nu)||_p = nu` is solved by safeguarded Newton on `nu`.
pub fn prox_weighted_group_lp(v: &[f64], weight: f64, rho: f64, p: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    prox_weighted_group_lp_into(v, weight, rho, p, &mut out)?;
    Ok(out)
}

pub fn prox_weighted_group_lp_into(
    v: &[f64],
    weight: f64,
    rho: f64,
    p: f64,
    out: &mut [f64],
) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("group lp prox needs p > 1, got {p}")));
    }
    if p == 2.0 {
        prox_weighted_group_l2_into(v, weight, rho, out);
        return Ok(());
    }
    if weight == 0.0 {
        out.copy_from_slice(v);
        return Ok(());
    }
    let dual = p / (p - 1.0);
    let b: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    if rho * lp_norm(&b, dual) <= weight {
        out.fill(0.0);
        return Ok(());
    }

    let kappa = weight / rho;
    let mut a = vec![0.0; b.len()];
    // h(nu) = ||a(nu)||_p - nu is positive near 0 and negative at ||b||_p.
    let eval = |nu: f64, a: &mut [f64]| -> Result<(f64, f64)> {
        let c = kappa * nu.powf(1.0 - p);
        for (aj, &bj) in a.iter_mut().zip(&b) {
            *aj = magnitude_root(bj, c, p)?;
        }
        let na = lp_norm(a, p);
        let mut dnorm = 0.0;
        if na > 0.0 {
            for &aj in a.iter() {
                if aj > 0.0 {
                    let apm1 = aj.powf(p - 1.0);
                    let da = (p - 1.0) * c * apm1 / (nu * (1.0 + c * (p - 1.0) * aj.powf(p - 2.0)));
                    dnorm += (aj / na).powf(p - 1.0) * da;
                }
            }
        }
        Ok((na - nu, dnorm - 1.0))
    };

    let mut hi = lp_norm(&b, p);
    let mut lo = 0.0;
    let mut nu = 0.5 * hi;
    let mut converged = false;
    for _ in 0..200 {
        let (h, dh) = eval(nu, &mut a)?;
        if h.abs() <= 1e-15 * nu {
            converged = true;
            break;
        }
        if h > 0.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        if hi - lo <= 1e-15 * hi {
            converged = true;
            break;
        }
        let newton = nu - h / dh;
        nu = if dh < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "group lp prox",
            iterations: 200,
            residual: hi - lo,
        });
    }
    eval(nu, &mut a)?;
    for ((o, &aj), &x) in out.iter_mut().zip(&a).zip(v) {
        *o = aj.copysign(x);
    }

    // stationarity check of the strongly convex objective
    let na = lp_norm(out, p);
    let mut grad2 = 0.0;
    for (&z, &x) in out.iter().zip(v) {
        let g = if na > 0.0 && z != 0.0 {
            weight * (z.abs() / na).powf(p - 1.0).copysign(z)
        } else {
            0.0
        };
        let gj = g + rho * (z - x);
        grad2 += gj * gj;
    }
    let grad = grad2.sqrt();
    let scale = 1.0_f64.max(rho * lp_norm(v, 2.0)).max(weight);
    if grad > 1e-10 * scale {
        return Err(Error::NoConvergence {
            what: "group lp prox",
            iterations: 200,
            residual: grad,
        });
    }
    Ok(())
}

/// Root in `[0, b]` of `a + c a^{p-1} = b`.
fn magnitude_root(b: f64, c: f64, p: f64) -> Result<f64> {
    if b == 0.0 {
        return Ok(0.0);
    }
    let f = |a: f64| {
        let pm = if a > 0.0 { a.powf(p - 2.0) } else { f64::INFINITY };
        (a + c * a * pm - b, 1.0 + c * (p - 1.0) * pm)
    };
    // a = b / (1 + c b^{p-2}) is exact for p = 2 and a good start otherwise
    let x0 = b / (1.0 + c * b.powf(p - 2.0));
    safeguarded_newton(f, 0.0, b, x0, 1e-15 * b, 200, "group lp prox magnitude")
}

/// Newton iteration for an increasing function with a sign change on `[lo, hi]`,
/// falling back to bisection whenever the Newton step leaves the bracket.
fn safeguarded_newton<F>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    tol: f64,
    max_iter: usize,
    what: &'static str,
) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut x = x0.clamp(lo, hi);
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        last = fx;
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let step = x - fx / dfx;
        x = if dfx.is_finite() && dfx > 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence {
        what,
        iterations: max_iter,
        residual: last.abs(),
    })
}

/// Componentwise `alpha rho1 v / (1 + alpha rho1)`, the prox of `||s||^2 / (2 alpha)`.
pub fn prox_fidelity_r2(v: &[f64], alpha: f64, rho1: f64) -> Vec<f64> {
    let k = alpha * rho1 / (1.0 + alpha * rho1);
    v.iter().map(|x| k * x).collect()
}

/// Prox of `|s| / alpha`, a soft threshold at `1 / (alpha rho1)`.
pub fn prox_fidelity_r1(v: f64, alpha: f64, rho1: f64) -> f64 {
    prox_weighted_l1(v, 1.0 / alpha, rho1)
}

/// Minimizer of `|s|^r / (r alpha) + (rho1/2)(s - v)^2` for `r > 1`.
pub fn prox_fidelity_r_general(v: f64, alpha: f64, rho1: f64, r: f64) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::InvalidParameter(format!("general fidelity prox needs r > 1, got {r}")));
    }
    let b = v.abs();
    if b == 0.0 {
        return Ok(0.0);
    }
    let g = |a: f64| {
        let am = if a > 0.0 { a.powf(r - 2.0) } else if r >= 2.0 { 0.0 } else { f64::INFINITY };
        (a * am / alpha + rho1 * (a - b), (r - 1.0) * am / alpha + rho1)
    };
    let x0 = b / (1.0 + b.powf(r - 2.0) / (alpha * rho1));
    let tol = 1e-12 * (rho1 * b).max(1.0);
    let a = safeguarded_newton(g, 0.0, b, x0, tol, NEWTON_MAX_ITER, "fidelity prox")?;
    Ok(a.copysign(v))
}

/// Output of [`prox_linf`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinfProxResult {
    /// Optimal infinity-norm level of the output.
    pub t_star: f64,
    /// Interval index in the ascending magnitude order (`None` when `t_star = 0` is forced
    /// by the derivative at zero).
    pub i_star: Option<usize>,
    pub s: Vec<f64>,
}

/// Minimizer of `||s||_inf + beta ||s - v||^2`.
///
/// With the magnitudes `|v|` sorted ascending, the problem reduces to the scalar convex
/// `f(t) = t + beta * sum_{|v_j| > t} (|v_j| - t)^2`. On the interval `[m_{k-1}, m_k]` the
/// stationary point is `t_k = (sum_{j >= k} m_j - 1/(2 beta)) / (n - k)`, and the optimum sits
/// in the first interval whose right end has `f' >= 0`. Components with `|v_j| <= t` are kept;
/// the rest are clamped to `sgn(v_j) t`.
pub fn prox_linf(v: &[f64], beta: f64) -> Result<LinfProxResult> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("linf prox needs beta > 0, got {beta}")));
    }
    let n = v.len();
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if n == 0 || 1.0 - 2.0 * beta * total >= 0.0 {
        return Ok(LinfProxResult {
            t_star: 0.0,
            i_star: None,
            s: vec![0.0; n],
        });
    }

    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| a.total_cmp(b));
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + mags[k];
    }

    let mut found = None;
    for k in 0..n {
        let slope_right = 1.0 + 2.0 * beta * ((n - k) as f64 * mags[k] - suffix[k]);
        if slope_right >= 0.0 {
            let left = if k == 0 { 0.0 } else { mags[k - 1] };
            let t = (suffix[k] - 0.5 / beta) / (n - k) as f64;
            found = Some((k, t.clamp(left, mags[k])));
            break;
        }
    }
    let (k, t) = found.ok_or_else(|| {
        Error::Internal("linf prox: no interval contains the stationary level".into())
    })?;

    let s = v
        .iter()
        .map(|&x| if x.abs() <= t { x } else { t.copysign(x) })
        .collect();
    Ok(LinfProxResult {
        t_star: t,
        i_star: Some(k),
        s,
    })
}

/// z-update for one group: prox of `weight * ||.||_p` with penalty `rho`.
pub fn prox_group_into(v: &[f64], weight: f64, rho: f64, p: f64, out: &mut [f64]) -> Result<()> {
    if p == 1.0 {
        for (o, &x) in out.iter_mut().zip(v) {
            *o = prox_weighted_l1(x, weight, rho);
        }
        Ok(())
    } else if p == 2.0 {
        prox_weighted_group_l2_into(v, weight, rho, out);
        Ok(())
    } else {
        prox_weighted_group_lp_into(v, weight, rho, p, out)
    }
}

/// s-update: prox of `f_r` with penalty `rho1`.
pub fn prox_fidelity_into(v: &[f64], alpha: f64, rho1: f64, r: Exponent, out: &mut [f64]) -> Result<()> {
    match r {
        Exponent::Infinity => {
            let res = prox_linf(v, alpha * rho1 / 2.0)?;
            out.copy_from_slice(&res.s);
        }
        Exponent::Finite(r) if r == 1.0 => {
            for (o, &x) in out.iter_mut().zip(v) {
                *o = prox_fidelity_r1(x, alpha, rho1);
            }
        }
        Exponent::Finite(r) if r == 2.0 => {
            let k = alpha * rho1 / (1.0 + alpha * rho1);
            for (o, &x) in out.iter_mut().zip(v) {
                *o = k * x;
            }
        }
        Exponent::Finite(r) => {
            for (o, &x) in out.iter_mut().zip(v) {
                *o = prox_fidelity_r_general(x, alpha, rho1, r)?;
            }
        }
    }
    Ok(())
}
