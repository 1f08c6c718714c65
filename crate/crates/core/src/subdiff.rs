//! Subgradient selections for the objective and for the linearized subproblem.
//!
//! Both the inexactness certificate and the stationarity residual report the 2-norm of a
//! minimum-norm element of a subdifferential. Where the set is a product of intervals or
//! dual-norm balls the minimum is taken exactly; for the `r = inf` fidelity term the
//! certificate uses the equal split over tied residuals and the stationarity residual solves
//! a small least-norm problem over the simplex of tied residuals.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::issapl::IterateState;
use crate::model::{group_support, linf_norm, lp_norm, Exponent, GroupedVector, ProblemSpec, SupportSet};
use crate::prox::prox_group_into;

/// Residuals within this relative distance of `||Ax - y||_inf` count as tied.
pub const TIE_RTOL: f64 = 1e-9;

/// `phi(t) = t^q`.
pub fn phi(t: f64, q: f64) -> f64 {
    if t > 0.0 {
        t.powf(q)
    } else {
        0.0
    }
}

/// `phi'(t) = q t^{q-1}`, defined for `t > 0` only.
pub fn phi_prime(t: f64, q: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveArgument(t));
    }
    Ok(q * t.powf(q - 1.0))
}

/// Tangent slopes `phi'(||x_i||_p)` for every group of `support`, in support order.
pub fn linearization_weights(x: &GroupedVector, support: &SupportSet, p: f64, q: f64) -> Result<Vec<f64>> {
    support
        .iter()
        .map(|i| {
            let n = lp_norm(x.group(i), p);
            if n > 0.0 {
                phi_prime(n, q)
            } else {
                Err(Error::ZeroNormGroup(i))
            }
        })
        .collect()
}

/// How the element of the fidelity subdifferential was chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum FidelitySelection {
    /// `r > 1`: the gradient.
    Gradient,
    /// `r = 1`: `sgn` of the residual with `sgn(0) = 0`.
    Sign,
    /// `r = inf`: unit mass split equally over the tied maximal residuals.
    MaxResidual { indices: Vec<usize>, signs: Vec<f64> },
}

/// Element `eta` of the fidelity subdifferential restricted to the coordinates of a support.
#[derive(Debug, Clone)]
pub struct FidelitySubgradient {
    pub eta: DVector<f64>,
    pub selection: FidelitySelection,
}

/// Row weights `g` such that `eta = A^T g`, for a residual `h = Ax - y`.
fn residual_weights(residual: &DVector<f64>, alpha: f64, r: Exponent) -> (DVector<f64>, FidelitySelection) {
    match r {
        Exponent::Finite(r) if r == 1.0 => (residual.map(|h| sgn(h) / alpha), FidelitySelection::Sign),
        Exponent::Finite(r) if r == 2.0 => (residual / alpha, FidelitySelection::Gradient),
        Exponent::Finite(r) => (
            residual.map(|h| h.abs().powf(r - 1.0) * sgn(h) / alpha),
            FidelitySelection::Gradient,
        ),
        Exponent::Infinity => {
            let ties = tied_residuals(residual);
            let mut g = DVector::zeros(residual.len());
            let signs: Vec<f64> = ties.iter().map(|&k| sgn(residual[k])).collect();
            if !ties.is_empty() {
                let share = 1.0 / (ties.len() as f64 * alpha);
                for (&k, &s) in ties.iter().zip(&signs) {
                    g[k] = s * share;
                }
            }
            (g, FidelitySelection::MaxResidual { indices: ties, signs })
        }
    }
}

/// Indices attaining `||h||_inf` up to [`TIE_RTOL`]; empty when `h = 0`.
fn tied_residuals(h: &DVector<f64>) -> Vec<usize> {
    let max = linf_norm(h.as_slice());
    if max == 0.0 {
        return Vec::new();
    }
    let cut = max - TIE_RTOL * max;
    (0..h.len()).filter(|&k| h[k].abs() >= cut).collect()
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `A_S^T g`, laid out over the coordinates of `support`.
fn adjoint_on_support(problem: &ProblemSpec, support: &SupportSet, g: &DVector<f64>) -> DVector<f64> {
    let partition = problem.partition();
    let a = problem.a();
    let mut out = Vec::with_capacity(partition.support_len(support));
    for i in support.iter() {
        for j in partition.range(i) {
            out.push(a.column(j).dot(g));
        }
    }
    DVector::from_vec(out)
}

/// An element of `dF_r(x)` restricted to the coordinates of `support`.
pub fn fidelity_subgradient(problem: &ProblemSpec, x: &GroupedVector, support: &SupportSet) -> Result<FidelitySubgradient> {
    problem.check_vector(x)?;
    let residual = problem.residual(x);
    let (g, selection) = residual_weights(&residual, problem.alpha(), problem.r());
    Ok(FidelitySubgradient {
        eta: adjoint_on_support(problem, support, &g),
        selection,
    })
}

/// The three parts of `u = zeta + eta + beta (x - x_prev)` on the coordinates of a support.
#[derive(Debug, Clone)]
pub struct SubgradComponents {
    pub zeta: DVector<f64>,
    pub eta: DVector<f64>,
    pub beta_term: DVector<f64>,
}

impl SubgradComponents {
    pub fn total(&self) -> DVector<f64> {
        &self.zeta + &self.eta + &self.beta_term
    }
}

/// Minimum-norm element of the subdifferential of the linearized energy at `candidate`,
/// over the support of `prev`.
pub fn linearized_subgradient(
    problem: &ProblemSpec,
    prev: &IterateState,
    candidate: &GroupedVector,
    beta: f64,
) -> Result<SubgradComponents> {
    problem.check_vector(candidate)?;
    let support = &prev.support;
    if !group_support(candidate, 0.0).is_subset_of(support) {
        return Err(Error::InvalidParameter(
            "candidate has nonzero groups outside the previous support".into(),
        ));
    }
    if prev.weights.len() != support.len() {
        return Err(Error::DimensionMismatch("one weight per support group expected".into()));
    }
    let p = problem.p();
    let eta = fidelity_subgradient(problem, candidate, support)?.eta;
    let beta_term = (candidate.gather(support) - prev.x.gather(support)) * beta;
    let c = &eta + &beta_term;
    let mut zeta = DVector::zeros(c.len());

    let partition = problem.partition();
    let mut offset = 0;
    for (slot, i) in support.iter().enumerate() {
        let w = prev.weights[slot];
        let len = partition.size(i);
        let xi = candidate.group(i);
        let ci = &c.as_slice()[offset..offset + len];
        let zi = &mut zeta.as_mut_slice()[offset..offset + len];
        group_zeta(xi, ci, w, p, zi)?;
        offset += len;
    }
    Ok(SubgradComponents { zeta, eta, beta_term })
}

/// Picks `zeta` in `w * d||.||_p(x_i)` minimizing `|c + zeta|`.
fn group_zeta(xi: &[f64], ci: &[f64], w: f64, p: f64, zeta: &mut [f64]) -> Result<()> {
    let nrm = lp_norm(xi, p);
    if nrm == 0.0 {
        // the subdifferential is the dual-norm ball of radius w; the closest point to -c is
        // -c + prox_{w||.||_p}(c) by the Moreau decomposition
        let mut pr = vec![0.0; ci.len()];
        prox_group_into(ci, w, 1.0, p, &mut pr)?;
        for ((z, &cj), &pj) in zeta.iter_mut().zip(ci).zip(&pr) {
            *z = pj - cj;
        }
        return Ok(());
    }
    if p == 1.0 {
        for ((z, &xj), &cj) in zeta.iter_mut().zip(xi).zip(ci) {
            *z = if xj != 0.0 { w * sgn(xj) } else { -cj.clamp(-w, w) };
        }
    } else {
        for (z, &xj) in zeta.iter_mut().zip(xi) {
            *z = if xj != 0.0 {
                w * (xj.abs() / nrm).powf(p - 1.0) * sgn(xj)
            } else {
                0.0
            };
        }
    }
    Ok(())
}

/// Outcome of checking `||u|| <= (beta/2) eps ||x_new - x_prev||`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Certificate {
    pub u_norm: f64,
    pub bound: f64,
    pub satisfied: bool,
}

pub fn inexactness_certificate(
    problem: &ProblemSpec,
    prev: &IterateState,
    candidate: &GroupedVector,
    beta: f64,
    epsilon: f64,
) -> Result<Certificate> {
    let comps = linearized_subgradient(problem, prev, candidate, beta)?;
    let u_norm = comps.total().norm();
    let step = (candidate.values() - prev.x.values()).norm();
    let bound = 0.5 * beta * epsilon * step;
    Ok(Certificate {
        u_norm,
        bound,
        satisfied: u_norm <= bound,
    })
}

/// 2-norm of the minimum-norm element of `dE(x)` that the selection rules can construct.
///
/// Zero groups have the whole space as subdifferential and contribute nothing.
pub fn stationarity_residual(problem: &ProblemSpec, x: &GroupedVector) -> Result<f64> {
    problem.check_vector(x)?;
    let support = group_support(x, 0.0);
    if support.is_empty() {
        return Ok(0.0);
    }
    let p = problem.p();
    let q = problem.q();
    let partition = problem.partition();

    // fixed part of zeta, with interval half-widths for p = 1 zero coordinates
    let len = partition.support_len(&support);
    let mut base = DVector::zeros(len);
    let mut halfwidth: Vec<Option<f64>> = vec![None; len];
    let mut offset = 0;
    for i in support.iter() {
        let xi = x.group(i);
        let nrm = lp_norm(xi, p);
        let w = phi_prime(nrm, q)?;
        for (j, &xj) in xi.iter().enumerate() {
            if p == 1.0 {
                if xj != 0.0 {
                    base[offset + j] = w * sgn(xj);
                } else {
                    halfwidth[offset + j] = Some(w);
                }
            } else if xj != 0.0 {
                base[offset + j] = w * (xj.abs() / nrm).powf(p - 1.0) * sgn(xj);
            }
        }
        offset += xi.len();
    }

    let residual = problem.residual(x);
    let alpha = problem.alpha();
    match problem.r() {
        Exponent::Infinity => {
            let ties = tied_residuals(&residual);
            let (columns, ball) = if ties.is_empty() {
                // h = 0: the subdifferential of ||.||_inf is the whole l1 unit ball
                ((0..residual.len()).map(|k| (k, 1.0)).collect::<Vec<_>>(), true)
            } else {
                (ties.iter().map(|&k| (k, sgn(residual[k]))).collect(), false)
            };
            let b: Vec<DVector<f64>> = columns
                .iter()
                .map(|&(k, s)| {
                    let mut e = DVector::zeros(residual.len());
                    e[k] = s / alpha;
                    adjoint_on_support(problem, &support, &e)
                })
                .collect();
            Ok(least_norm_over_mixtures(&base, &halfwidth, &b, ball))
        }
        r => {
            let (g, _) = residual_weights(&residual, alpha, r);
            let eta = adjoint_on_support(problem, &support, &g);
            Ok(interval_residual(&(base + eta), &halfwidth).norm())
        }
    }
}

/// Componentwise distance of `v` to `{0}` or to `[-w, w]`.
fn interval_residual(v: &DVector<f64>, halfwidth: &[Option<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        v.iter().zip(halfwidth).map(|(&vj, hw)| match hw {
            Some(w) => vj - vj.clamp(-*w, *w),
            None => vj,
        }),
    )
}

/// `min_theta || dist(base + sum_k theta_k b_k) ||` over the probability simplex, or over the
/// l1 unit ball when `ball` is set, by accelerated projected gradient.
fn least_norm_over_mixtures(base: &DVector<f64>, halfwidth: &[Option<f64>], b: &[DVector<f64>], ball: bool) -> f64 {
    let m = b.len();
    let combine = |theta: &[f64]| {
        let mut v = base.clone();
        for (t, bk) in theta.iter().zip(b) {
            if *t != 0.0 {
                v.axpy(*t, bk, 1.0);
            }
        }
        v
    };
    let value = |theta: &[f64]| interval_residual(&combine(theta), halfwidth).norm();
    let project = |theta: &mut Vec<f64>| {
        if ball {
            project_l1_ball(theta)
        } else {
            project_simplex(theta)
        }
    };

    let mut theta = if ball { vec![0.0; m] } else { vec![1.0 / m as f64; m] };
    if m == 1 && !ball {
        return value(&theta);
    }
    let lipschitz: f64 = b.iter().map(|bk| bk.norm_squared()).sum::<f64>().max(f64::MIN_POSITIVE);
    let step = 1.0 / lipschitz;
    let mut best = value(&theta);
    let mut momentum = theta.clone();
    let mut t_prev = 1.0f64;
    for _ in 0..5000 {
        let res = interval_residual(&combine(&momentum), halfwidth);
        let mut next: Vec<f64> = momentum
            .iter()
            .zip(b)
            .map(|(th, bk)| th - step * bk.dot(&res))
            .collect();
        project(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
        let ratio = (t_prev - 1.0) / t_next;
        let change: f64 = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).sum();
        momentum = next.iter().zip(&theta).map(|(n, o)| n + ratio * (n - o)).collect();
        theta = next;
        t_prev = t_next;
        best = best.min(value(&theta));
        if change < 1e-14 {
            break;
        }
    }
    best
}

/// Euclidean projection onto `{theta >= 0, sum theta = 1}`.
fn project_simplex(theta: &mut [f64]) {
    let mut sorted: Vec<f64> = theta.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            tau = candidate;
        }
    }
    for t in theta.iter_mut() {
        *t = (*t - tau).max(0.0);
    }
}

/// Euclidean projection onto the l1 unit ball.
fn project_l1_ball(theta: &mut [f64]) {
    if theta.iter().map(|t| t.abs()).sum::<f64>() <= 1.0 {
        return;
    }
    let mut mags: Vec<f64> = theta.iter().map(|t| t.abs()).collect();
    project_simplex(&mut mags);
    for (t, m) in theta.iter_mut().zip(mags) {
        *t = m * sgn(*t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupPartition;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn phi_prime_values() {
        assert_relative_eq!(phi_prime(4.0, 0.5).unwrap(), 0.25);
        assert_relative_eq!(phi_prime(1.0, 0.3).unwrap(), 0.3);
        assert!(matches!(phi_prime(0.0, 0.5), Err(Error::NonPositiveArgument(_))));
        assert!(phi_prime(-1.0, 0.5).is_err());
    }

    #[test]
    fn phi_prime_matches_central_difference() {
        for &(t, q) in &[(0.3, 0.2), (1.7, 0.5), (12.0, 0.9), (0.05, 0.7)] {
            let h = 1e-6 * t;
            let fd = (phi(t + h, q) - phi(t - h, q)) / (2.0 * h);
            assert_relative_eq!(phi_prime(t, q).unwrap(), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn weights_on_support() {
        let part = Arc::new(GroupPartition::new(vec![2, 2]).unwrap());
        let x = GroupedVector::from_vec(vec![3.0, 4.0, 1.0, 0.0], part).unwrap();
        let w = linearization_weights(&x, &SupportSet::full(2), 2.0, 0.5).unwrap();
        assert_relative_eq!(w[0], 0.5 / 5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.5);
        let zero = GroupedVector::from_vec(vec![3.0, 4.0, 0.0, 0.0], x.partition().clone()).unwrap();
        assert!(matches!(
            linearization_weights(&zero, &SupportSet::full(2), 2.0, 0.5),
            Err(Error::ZeroNormGroup(1))
        ));
    }

    #[test]
    fn simplex_projection() {
        let mut t = vec![0.2, 0.9, -0.3];
        project_simplex(&mut t);
        assert_relative_eq!(t.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(t.iter().all(|&v| v >= 0.0));
        let mut inside = vec![0.3, -0.2];
        project_l1_ball(&mut inside);
        assert_eq!(inside, vec![0.3, -0.2]);
    }

    #[test]
    fn linf_selection_single_max() {
        let part = Arc::new(GroupPartition::new(vec![2]).unwrap());
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let alpha = 0.5;
        let prob = ProblemSpec::new(a.clone(), y, alpha, 2.0, 0.5, Exponent::Infinity, part.clone()).unwrap();
        let x = GroupedVector::from_vec(vec![1.0, 0.0], part).unwrap();
        // residual = (1, -1, 3): the single maximizer is row 2 with value +3
        let sub = fidelity_subgradient(&prob, &x, &SupportSet::full(1)).unwrap();
        assert_relative_eq!(sub.eta[0], a[(2, 0)] / alpha);
        assert_relative_eq!(sub.eta[1], a[(2, 1)] / alpha);
        let FidelitySelection::MaxResidual { indices, signs } = sub.selection else {
            panic!("expected a max-residual selection");
        };
        // membership: ||u||_1 <= 1 and u^T h = ||h||_inf
        assert_eq!(indices, vec![2]);
        assert_eq!(signs, vec![1.0]);
    }

    #[test]
    fn zero_vector_is_stationary() {
        let part = Arc::new(GroupPartition::new(vec![2, 1]).unwrap());
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        for r in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinity] {
            let prob = ProblemSpec::new(a.clone(), y.clone(), 0.3, 1.0, 0.5, r, part.clone()).unwrap();
            assert_eq!(stationarity_residual(&prob, &GroupedVector::zeros(part.clone())).unwrap(), 0.0);
        }
    }

    #[test]
    fn linf_tie_least_norm_beats_equal_split() {
        // two tied residuals whose rows cancel: the least-norm split is exact
        let part = Arc::new(GroupPartition::new(vec![1]).unwrap());
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 2.0]);
        let prob = ProblemSpec::new(a, y, 1.0, 2.0, 0.5, Exponent::Infinity, part.clone()).unwrap();
        // x = 1: residual (1, -1), zeta = 0.5, eta = theta_0 - theta_1 ranges over [-1, 1]
        let x = GroupedVector::from_vec(vec![1.0], part).unwrap();
        let res = stationarity_residual(&prob, &x).unwrap();
        assert!(res < 1e-8, "residual {res}");
    }
}
