//! Synthetic group-sparse recovery instances: orthonormal-row Gaussian sensing matrices,
//! Gaussian group-sparse signals and unit-variance noise.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Exponent, GroupPartition, GroupedVector, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Laplace,
    Uniform,
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Laplace => "laplace",
            NoiseKind::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    /// Number of measurements.
    pub rows: usize,
    /// Signal length.
    pub cols: usize,
    pub group_size: usize,
    /// Number of nonzero groups.
    pub active_groups: usize,
    pub sigma: f64,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl GenSpec {
    pub fn num_groups(&self) -> usize {
        self.cols / self.group_size.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 || self.cols % self.group_size != 0 {
            return Err(Error::InvalidParameter(format!(
                "group size {} does not divide {}",
                self.group_size, self.cols
            )));
        }
        if self.active_groups > self.num_groups() {
            return Err(Error::InvalidParameter(format!(
                "{} active groups requested but only {} exist",
                self.active_groups,
                self.num_groups()
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if self.rows == 0 || self.rows > self.cols {
            return Err(Error::InvalidParameter(format!(
                "need 0 < rows <= cols, got {} x {}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<Arc<GroupPartition>> {
        self.validate()?;
        Ok(Arc::new(GroupPartition::uniform(self.num_groups(), self.group_size)?))
    }
}

/// Derives an independent stream seed from a base seed and a stream tag.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SIGNAL_STREAM: u64 = 1;
const MATRIX_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

pub fn gen_signal(spec: &GenSpec) -> Result<GroupedVector> {
    let partition = spec.partition()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, SIGNAL_STREAM));
    let mut chosen = sample(&mut rng, partition.num_groups(), spec.active_groups).into_vec();
    chosen.sort_unstable();
    let mut x = GroupedVector::zeros(partition);
    for g in chosen {
        for v in x.group_mut(g) {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    Ok(x)
}

/// Gaussian `rows x cols` matrix with its rows orthonormalized.
pub fn gen_matrix(rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    if rows > cols {
        return Err(Error::InvalidParameter(format!(
            "orthonormal rows need rows <= cols, got {rows} x {cols}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // draw B^T directly, column by column of B^T = row by row of B
    let bt = DMatrix::from_fn(cols, rows, |_, _| StandardNormal.sample(&mut rng));
    orthonormalize_rows_of_transpose(bt)
}

fn orthonormalize_rows_of_transpose(bt: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = bt.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|d| d.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient);
    }
    Ok(qr.q().transpose())
}

/// Unit-variance noise of the requested kind.
pub fn gen_noise(len: usize, kind: NoiseKind, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        NoiseKind::Gaussian => DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng)),
        NoiseKind::Laplace => {
            let b = std::f64::consts::FRAC_1_SQRT_2;
            DVector::from_fn(len, |_, _| {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
        }
        NoiseKind::Uniform => {
            let h = 3f64.sqrt();
            let dist = Uniform::new_inclusive(-h, h).expect("valid bounds");
            DVector::from_fn(len, |_, _| dist.sample(&mut rng))
        }
    }
}

/// Problem instance `y = A x_or + sigma * noise` and its ground truth.
pub fn gen_problem(spec: &GenSpec, alpha: f64, p: f64, q: f64, r: Exponent) -> Result<(ProblemSpec, GroupedVector)> {
    spec.validate()?;
    let x_or = gen_signal(spec)?;
    let a = gen_matrix(spec.rows, spec.cols, derive_seed(spec.seed, MATRIX_STREAM))?;
    let mut y = &a * x_or.values();
    if spec.sigma > 0.0 {
        y.axpy(spec.sigma, &gen_noise(spec.rows, spec.noise, derive_seed(spec.seed, NOISE_STREAM)), 1.0);
    }
    let problem = ProblemSpec::new(a, y, alpha, p, q, r, x_or.partition().clone())?;
    Ok((problem, x_or))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::group_support;

    fn spec(active: usize) -> GenSpec {
        GenSpec {
            rows: 16,
            cols: 32,
            group_size: 4,
            active_groups: active,
            sigma: 0.1,
            noise: NoiseKind::Uniform,
            seed: 11,
        }
    }

    #[test]
    fn signal_support_counts() {
        assert_eq!(gen_signal(&spec(0)).unwrap().norm2(), 0.0);
        assert_eq!(group_support(&gen_signal(&spec(8)).unwrap(), 0.0).len(), 8);
        assert_eq!(group_support(&gen_signal(&spec(3)).unwrap(), 0.0).len(), 3);
    }

    #[test]
    fn signal_is_reproducible() {
        let a = gen_signal(&spec(3)).unwrap();
        let b = gen_signal(&spec(3)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn rows_are_orthonormal() {
        for (m, n) in [(16, 32), (8, 8), (1, 5)] {
            let a = gen_matrix(m, n, 5).unwrap();
            let err = (&a * a.transpose() - DMatrix::identity(m, m)).norm();
            assert!(err <= 1e-10, "{m}x{n}: {err}");
        }
    }

    #[test]
    fn row_space_matches_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DMatrix::from_fn(4, 6, |_, _| StandardNormal.sample(&mut rng));
        let a = orthonormalize_rows_of_transpose(b.transpose()).unwrap();
        // projecting B's rows onto A's row space leaves them unchanged
        let proj = &b * a.transpose() * &a;
        assert!((proj - &b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn rank_deficiency_detected() {
        let bt = DMatrix::from_fn(5, 2, |i, _| i as f64 + 1.0);
        assert!(matches!(orthonormalize_rows_of_transpose(bt), Err(Error::RankDeficient)));
    }

    #[test]
    fn zero_sigma_is_noiseless() {
        let mut s = spec(3);
        s.sigma = 0.0;
        let (prob, x) = gen_problem(&s, 1.0, 2.0, 0.5, Exponent::Finite(2.0)).unwrap();
        assert_eq!(prob.residual(&x).norm(), 0.0);
    }

    #[test]
    fn uniform_noise_is_bounded() {
        let (prob, x) = gen_problem(&spec(3), 1.0, 2.0, 0.5, Exponent::Finite(2.0)).unwrap();
        let res = prob.residual(&x);
        assert!(res.amax() <= 0.1 * 3f64.sqrt() + 1e-12);
    }

    #[test]
    fn noise_is_reproducible() {
        assert_eq!(gen_noise(10, NoiseKind::Laplace, 4), gen_noise(10, NoiseKind::Laplace, 4));
    }
}
