//! Grouped vectors, problem instances and evaluation of the objective
//!
//! `E(x) = sum_i ||x_i||_p^q + F_r(x)` with `F_r(x) = ||Ax - y||_r^r / (r alpha)`
//! for finite `r` and `F_inf(x) = ||Ax - y||_inf / alpha`.
//!
//! Group indices are zero-based throughout the crate.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default threshold on the group l-inf norm below which a group counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

/// A norm exponent that is either a finite real `>= 1` or exactly infinity.
///
/// Serialized as a JSON number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Exponent::Finite(v) => Some(v),
            Exponent::Infinity => None,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(v) => serializer.serialize_f64(*v),
            Exponent::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ExponentVisitor;

        impl Visitor<'_> for ExponentVisitor {
            type Value = Exponent;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Exponent, E> {
                if v.is_infinite() && v > 0.0 {
                    Ok(Exponent::Infinity)
                } else {
                    Ok(Exponent::Finite(v))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Exponent, E> {
                Ok(Exponent::Finite(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Exponent, E> {
                Ok(Exponent::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Exponent, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => Ok(Exponent::Infinity),
                    other => other
                        .parse::<f64>()
                        .map(Exponent::Finite)
                        .map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        deserializer.deserialize_any(ExponentVisitor)
    }
}

/// Contiguous partition of `0..N` into `g` groups of sizes `N_i >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl GroupPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if let Some(i) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidPartition(format!("group {i} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &n in &sizes {
            offsets.push(total);
            total += n;
        }
        Ok(Self {
            sizes,
            offsets,
            total,
        })
    }

    /// `groups` groups of identical size `size`.
    pub fn uniform(groups: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; groups])
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn size(&self, group: usize) -> usize {
        self.sizes[group]
    }

    pub fn range(&self, group: usize) -> Range<usize> {
        let start = self.offsets[group];
        start..start + self.sizes[group]
    }

    pub fn check_group(&self, group: usize) -> Result<()> {
        if group < self.num_groups() {
            Ok(())
        } else {
            Err(Error::InvalidGroupIndex {
                index: group,
                groups: self.num_groups(),
            })
        }
    }

    /// Partition of the vector obtained by keeping only the groups in `support`.
    pub fn restrict(&self, support: &SupportSet) -> GroupPartition {
        let sizes: Vec<usize> = support.iter().map(|i| self.sizes[i]).collect();
        // sizes are copied from a valid partition, so they are all positive
        Self::new(sizes).expect("restricted partition is valid")
    }

    /// Number of coordinates covered by the groups in `support`.
    pub fn support_len(&self, support: &SupportSet) -> usize {
        support.iter().map(|i| self.sizes[i]).sum()
    }
}

/// Sorted set of distinct group indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    /// Builds a support set, sorting and checking the indices against `groups`.
    pub fn new(mut indices: Vec<usize>, groups: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate group index in support".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= groups {
                return Err(Error::InvalidGroupIndex {
                    index: last,
                    groups,
                });
            }
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full(groups: usize) -> Self {
        Self {
            indices: (0..groups).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, group: usize) -> bool {
        self.indices.binary_search(&group).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }
}

/// A real vector together with its group structure.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedVector {
    values: DVector<f64>,
    partition: Arc<GroupPartition>,
}

impl GroupedVector {
    pub fn new(values: DVector<f64>, partition: Arc<GroupPartition>) -> Result<Self> {
        if values.len() != partition.len() {
            return Err(Error::DimensionMismatch(format!(
                "vector has length {} but partition covers {}",
                values.len(),
                partition.len()
            )));
        }
        Ok(Self { values, partition })
    }

    pub fn from_vec(values: Vec<f64>, partition: Arc<GroupPartition>) -> Result<Self> {
        Self::new(DVector::from_vec(values), partition)
    }

    pub fn zeros(partition: Arc<GroupPartition>) -> Self {
        Self {
            values: DVector::zeros(partition.len()),
            partition,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DVector<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn partition(&self) -> &Arc<GroupPartition> {
        &self.partition
    }

    pub fn group(&self, group: usize) -> &[f64] {
        &self.values.as_slice()[self.partition.range(group)]
    }

    pub fn group_mut(&mut self, group: usize) -> &mut [f64] {
        let range = self.partition.range(group);
        &mut self.values.as_mut_slice()[range]
    }

    pub fn norm2(&self) -> f64 {
        self.values.norm()
    }

    /// Values of the groups in `support`, concatenated in group order.
    pub fn gather(&self, support: &SupportSet) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.partition.support_len(support));
        for i in support.iter() {
            out.extend_from_slice(self.group(i));
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`GroupedVector::gather`]: zeros everywhere except the groups in `support`.
    pub fn scatter(
        restricted: &[f64],
        support: &SupportSet,
        partition: Arc<GroupPartition>,
    ) -> Result<Self> {
        let expected = partition.support_len(support);
        if restricted.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "restricted vector has length {} but support covers {expected}",
                restricted.len()
            )));
        }
        let mut out = Self::zeros(partition);
        let mut cursor = 0;
        for i in support.iter() {
            let dst = out.group_mut(i);
            dst.copy_from_slice(&restricted[cursor..cursor + dst.len()]);
            cursor += dst.len();
        }
        Ok(out)
    }

    /// Sets every group outside `support` to zero.
    pub fn zero_outside(&mut self, support: &SupportSet) {
        for i in 0..self.partition.num_groups() {
            if !support.contains(i) {
                self.group_mut(i).fill(0.0);
            }
        }
    }
}

/// `||v||_p` for a finite `p >= 1`, scaled to avoid overflow for large `p`.
pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if p == 2.0 {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let scale = linf_norm(v);
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = v.iter().map(|x| (x.abs() / scale).powf(p)).sum();
    scale * sum.powf(1.0 / p)
}

pub fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `||v||_p` for a finite or infinite exponent.
pub fn norm(v: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Finite(p) => lp_norm(v, p),
        Exponent::Infinity => linf_norm(v),
    }
}

/// `||x_i||_p` for group `i`.
pub fn group_norm(x: &GroupedVector, group: usize, p: Exponent) -> Result<f64> {
    x.partition().check_group(group)?;
    if let Exponent::Finite(p) = p {
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!("norm exponent {p} < 1")));
        }
    }
    Ok(norm(x.group(group), p))
}

/// Groups whose l-inf norm exceeds `zero_tol`.
pub fn group_support(x: &GroupedVector, zero_tol: f64) -> SupportSet {
    let indices = (0..x.partition().num_groups())
        .filter(|&i| linf_norm(x.group(i)) > zero_tol)
        .collect();
    SupportSet { indices }
}

/// Model parameters and data of one recovery instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    a: DMatrix<f64>,
    y: DVector<f64>,
    alpha: f64,
    p: f64,
    q: f64,
    r: Exponent,
    partition: Arc<GroupPartition>,
}

impl ProblemSpec {
    pub fn new(
        a: DMatrix<f64>,
        y: DVector<f64>,
        alpha: f64,
        p: f64,
        q: f64,
        r: Exponent,
        partition: Arc<GroupPartition>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must lie in [1, inf), got {p}")));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter(format!("q must lie in (0, 1), got {q}")));
        }
        if let Exponent::Finite(r) = r {
            if !(r >= 1.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("r must be >= 1 or inf, got {r}")));
            }
        }
        if a.ncols() != partition.len() {
            return Err(Error::DimensionMismatch(format!(
                "A has {} columns but the partition covers {}",
                a.ncols(),
                partition.len()
            )));
        }
        if a.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "A has {} rows but y has length {}",
                a.nrows(),
                y.len()
            )));
        }
        Ok(Self {
            a,
            y,
            alpha,
            p,
            q,
            r,
            partition,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> Exponent {
        self.r
    }

    pub fn partition(&self) -> &Arc<GroupPartition> {
        &self.partition
    }

    /// Number of measurements `M`.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Signal length `N`.
    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// Same data with different model parameters.
    pub fn with_params(&self, alpha: f64, p: f64, q: f64, r: Exponent) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.y.clone(),
            alpha,
            p,
            q,
            r,
            self.partition.clone(),
        )
    }

    pub fn check_vector(&self, x: &GroupedVector) -> Result<()> {
        if x.partition().as_ref() != self.partition.as_ref() {
            return Err(Error::DimensionMismatch(
                "vector partition differs from the problem partition".into(),
            ));
        }
        Ok(())
    }

    /// `Ax - y`.
    pub fn residual(&self, x: &GroupedVector) -> DVector<f64> {
        &self.a * x.values() - &self.y
    }
}

/// `F_r` evaluated on a residual vector.
pub fn fidelity_of_residual(residual: &[f64], alpha: f64, r: Exponent) -> f64 {
    match r {
        Exponent::Infinity => linf_norm(residual) / alpha,
        Exponent::Finite(r) if r == 2.0 => {
            residual.iter().map(|v| v * v).sum::<f64>() / (2.0 * alpha)
        }
        Exponent::Finite(r) if r == 1.0 => residual.iter().map(|v| v.abs()).sum::<f64>() / alpha,
        Exponent::Finite(r) => {
            residual.iter().map(|v| v.abs().powf(r)).sum::<f64>() / (r * alpha)
        }
    }
}

/// `F_r(x)`.
pub fn fidelity(problem: &ProblemSpec, x: &GroupedVector) -> Result<f64> {
    problem.check_vector(x)?;
    let res = problem.residual(x);
    Ok(fidelity_of_residual(res.as_slice(), problem.alpha, problem.r))
}

/// `sum_i ||x_i||_p^q`.
pub fn regularizer(x: &GroupedVector, p: f64, q: f64) -> f64 {
    (0..x.partition().num_groups())
        .map(|i| {
            let n = lp_norm(x.group(i), p);
            if n > 0.0 {
                n.powf(q)
            } else {
                0.0
            }
        })
        .sum()
}

/// `E(x) = sum_i ||x_i||_p^q + F_r(x)`.
pub fn objective(problem: &ProblemSpec, x: &GroupedVector) -> Result<f64> {
    Ok(regularizer(x, problem.p, problem.q) + fidelity(problem, x)?)
}

/// Column block of `a` for the groups in `support`, preserving group order.
pub fn restrict_columns(
    a: &DMatrix<f64>,
    partition: &GroupPartition,
    support: &SupportSet,
) -> Result<DMatrix<f64>> {
    if a.ncols() != partition.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns but partition covers {}",
            a.ncols(),
            partition.len()
        )));
    }
    if let Some(&last) = support.as_slice().last() {
        partition.check_group(last)?;
    }
    let cols = partition.support_len(support);
    let rows = a.nrows();
    let mut data = Vec::with_capacity(rows * cols);
    let src = a.as_slice();
    for i in support.iter() {
        let range = partition.range(i);
        data.extend_from_slice(&src[range.start * rows..range.end * rows]);
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}
