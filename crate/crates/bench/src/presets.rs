//! Built-in experiment presets and the multi-plan suites behind `compare-r` and
//! `table3-self`.

use issapl_core::datagen::NoiseKind;
use issapl_core::model::Exponent;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::experiment::{run_experiment, ExperimentPlan, Sweep};
use crate::results::ResultRow;

pub const TABLE1: &str = include_str!("../presets/table1.json");
pub const COMPARE_R: &str = include_str!("../presets/compare_r.json");
pub const TABLE3_SELF: &str = include_str!("../presets/table3_self.json");

pub fn table1() -> Result<ExperimentPlan> {
    Ok(serde_json::from_str(TABLE1)?)
}

pub fn compare_r() -> Result<CompareSuite> {
    Ok(serde_json::from_str(COMPARE_R)?)
}

pub fn table3_self() -> Result<Table3Suite> {
    Ok(serde_json::from_str(TABLE3_SELF)?)
}

/// The fidelity exponent suited to each noise law.
pub fn matched_exponent(noise: NoiseKind) -> Exponent {
    match noise {
        NoiseKind::Laplace => Exponent::Finite(1.0),
        NoiseKind::Gaussian => Exponent::Finite(2.0),
        NoiseKind::Uniform => Exponent::Infinity,
    }
}

/// Fidelity exponents compared on every (noise, sparsity) cell. `base.sweep` must be an
/// `r` sweep; its generator template supplies everything except noise kind and sparsity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSuite {
    pub base: ExperimentPlan,
    pub noises: Vec<NoiseKind>,
    pub active_groups: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareCell {
    pub noise: NoiseKind,
    pub active_groups: usize,
    pub exponents: Vec<Exponent>,
    /// One row per exponent, labelled `noise/s=../r=..`.
    pub rows: Vec<ResultRow>,
}

impl CompareCell {
    /// Whether the matched exponent has the strictly smallest mean error in this cell.
    pub fn matched_is_best(&self) -> bool {
        let target = matched_exponent(self.noise);
        let Some(k) = self.exponents.iter().position(|&r| r == target) else {
            return false;
        };
        let best = self.rows[k].rel_err_mean;
        self.rows
            .iter()
            .enumerate()
            .all(|(j, row)| j == k || best < row.rel_err_mean)
    }
}

impl CompareSuite {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.base.sweep, Sweep::R(_)) {
            return Err(BenchError::Plan("compare suite needs an r sweep".into()));
        }
        if self.noises.is_empty() || self.active_groups.is_empty() {
            return Err(BenchError::Plan("compare suite has no cells".into()));
        }
        self.base.validate()
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.base.gen.seed = seed;
    }

    pub fn plan_for(&self, noise: NoiseKind, active_groups: usize) -> ExperimentPlan {
        let mut plan = self.base.clone();
        plan.gen.noise = noise;
        plan.gen.active_groups = active_groups;
        plan
    }

    pub fn run(&self, timing: bool) -> Result<Vec<CompareCell>> {
        self.validate()?;
        let Sweep::R(exponents) = &self.base.sweep else {
            unreachable!("validated above")
        };
        let mut cells = Vec::new();
        for &noise in &self.noises {
            for &s in &self.active_groups {
                let mut rows = run_experiment(&self.plan_for(noise, s), timing)?;
                for row in &mut rows {
                    row.sweep = format!("{noise}/s={s}/r={}", row.sweep);
                }
                cells.push(CompareCell {
                    noise,
                    active_groups: s,
                    exponents: exponents.clone(),
                    rows,
                });
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPlan {
    pub label: String,
    pub plan: ExperimentPlan,
}

/// Several plans run back to back, rows prefixed by the plan label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table3Suite {
    pub plans: Vec<LabeledPlan>,
}

impl Table3Suite {
    pub fn set_seed(&mut self, seed: u64) {
        for entry in &mut self.plans {
            entry.plan.gen.seed = seed;
        }
    }

    pub fn run(&self, timing: bool) -> Result<Vec<ResultRow>> {
        if self.plans.is_empty() {
            return Err(BenchError::Plan("suite has no plans".into()));
        }
        let mut out = Vec::new();
        for entry in &self.plans {
            let axis = entry.plan.sweep.axis();
            for mut row in run_experiment(&entry.plan, timing)? {
                row.sweep = format!("{}/{axis}={}", entry.label, row.sweep);
                out.push(row);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        table1().unwrap().validate().unwrap();
        compare_r().unwrap().validate().unwrap();
        for entry in table3_self().unwrap().plans {
            entry.plan.validate().unwrap();
        }
    }

    #[test]
    fn matched_cell_detection() {
        let row = |e: f64| ResultRow {
            sweep: String::new(),
            rel_err_mean: e,
            success_rate: 0.0,
            time_mean_s: 0.0,
            outer_iters_mean: 0.0,
            support_mean: 0.0,
        };
        let mut cell = CompareCell {
            noise: NoiseKind::Laplace,
            active_groups: 4,
            exponents: vec![Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinity],
            rows: vec![row(0.01), row(0.02), row(0.03)],
        };
        assert!(cell.matched_is_best());
        cell.rows[1] = row(0.01);
        assert!(!cell.matched_is_best());
        cell.noise = NoiseKind::Uniform;
        assert!(!cell.matched_is_best());
    }
}
