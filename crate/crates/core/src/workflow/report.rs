use serde::{Deserialize, Serialize};

use super::WorkflowError;
use crate::data::{Direction, LogDataset};
use crate::mopt::FrontRecord;
use crate::stats;

pub const BACKTEST_VERSION: u32 = 1;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
}

impl GroupStats {
    fn of(values: &[f64]) -> Self {
        let count = values.len();
        let mean = if count > 0 { stats::mean(values) } else { 0.0 };
        let stderr = if count > 1 { (stats::variance(values) / count as f64).sqrt() } else { 0.0 };
        Self { count, mean, stderr }
    }
}

/// Launched minus holdout on one outcome, with a normal 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeBacktest {
    pub name: String,
    pub direction: Direction,
    pub launched: GroupStats,
    pub holdout: GroupStats,
    pub difference: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
}

/// Noiseless values from the simulator's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub launched: Vec<f64>,
    /// `single_arm[i-1]`: everyone on arm `i`.
    pub single_arm: Vec<Vec<f64>>,
    /// Best single arm per outcome, respecting its direction.
    pub best_single_arm: Vec<f64>,
    /// Uniform randomization, the holdout's policy.
    pub randomized: Vec<f64>,
}

impl OracleComparison {
    pub fn new(launched: Vec<f64>, single_arm: Vec<Vec<f64>>, directions: &[Direction]) -> Self {
        let m = launched.len();
        let best_single_arm = (0..m)
            .map(|j| {
                let s = directions.get(j).map_or(1.0, |d| d.sign());
                single_arm.iter().map(|v| v[j] * s).fold(f64::NEG_INFINITY, f64::max) * s
            })
            .collect();
        let randomized = (0..m).map(|j| stats::mean(&single_arm.iter().map(|v| v[j]).collect::<Vec<_>>())).collect();
        Self { launched, single_arm, best_single_arm, randomized }
    }
}

/// Launched-policy traffic against the randomized holdout.
///
/// Schema (version 1): `version`, `population` (launched + holdout
/// units), `outcomes` (one [`OutcomeBacktest`] per outcome, in log order)
/// and `oracle` (an [`OracleComparison`], or null without a scenario).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestReport {
    pub version: u32,
    pub population: usize,
    pub outcomes: Vec<OutcomeBacktest>,
    pub oracle: Option<OracleComparison>,
}

impl BacktestReport {
    pub fn build(
        launched: &LogDataset,
        holdout: &LogDataset,
        oracle: Option<OracleComparison>,
    ) -> Result<Self, WorkflowError> {
        if launched.m != holdout.m {
            return Err(WorkflowError::Invalid("launched and holdout logs disagree on outcomes".into()));
        }
        if holdout.is_empty() {
            return Err(WorkflowError::Invalid("the holdout has no units; use a positive holdout_fraction".into()));
        }
        let outcomes = launched
            .outcome_specs
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                let col = |log: &LogDataset| log.records.iter().map(|r| r.outcomes[j]).collect::<Vec<f64>>();
                let a = GroupStats::of(&col(launched));
                let b = GroupStats::of(&col(holdout));
                let difference = a.mean - b.mean;
                let stderr = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
                OutcomeBacktest {
                    name: spec.name.clone(),
                    direction: spec.direction,
                    launched: a,
                    holdout: b,
                    difference,
                    stderr,
                    ci_low: difference - Z95 * stderr,
                    ci_high: difference + Z95 * stderr,
                    ci_level: 0.95,
                }
            })
            .collect();
        Ok(Self { version: BACKTEST_VERSION, population: launched.len() + holdout.len(), outcomes, oracle })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "outcome,launched_count,launched_mean,launched_stderr,holdout_count,holdout_mean,holdout_stderr,difference,ci_low,ci_high,oracle_launched,oracle_best_single_arm\n",
        );
        for (j, o) in self.outcomes.iter().enumerate() {
            let (ol, ob) = match &self.oracle {
                Some(c) => (c.launched[j].to_string(), c.best_single_arm[j].to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                o.name,
                o.launched.count,
                o.launched.mean,
                o.launched.stderr,
                o.holdout.count,
                o.holdout.mean,
                o.holdout.stderr,
                o.difference,
                o.ci_low,
                o.ci_high,
                ol,
                ob
            ));
        }
        out
    }
}

/// Pareto scatter rows for one front, values in raw outcome units:
/// `family,point,iteration,estimator,w_1..w_m,b_1..b_n`, then per outcome
/// `<name>,<name>_stderr,<name>_ci_low,<name>_ci_high`. `signs` maps the
/// stored larger-is-better objectives back to raw values.
pub fn front_csv(family: &str, records: &[FrontRecord], names: &[String], signs: &[f64], header: bool) -> String {
    let mut out = String::new();
    let (m, n) = records.first().map_or((names.len(), 0), |r| (r.params.m(), r.params.n()));
    if header {
        let mut cols = vec!["family".to_string(), "point".into(), "iteration".into(), "estimator".into()];
        cols.extend((1..=m).map(|j| format!("w_{j}")));
        cols.extend((1..=n).map(|i| format!("b_{i}")));
        for name in names {
            cols.extend([name.clone(), format!("{name}_stderr"), format!("{name}_ci_low"), format!("{name}_ci_high")]);
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    for (k, r) in records.iter().enumerate() {
        let mut cols = vec![
            family.to_string(),
            k.to_string(),
            r.iteration.to_string(),
            r.estimator.map_or(String::new(), |e| e.to_string()),
        ];
        cols.extend(r.params.weights.iter().map(f64::to_string));
        cols.extend(r.params.biases.iter().map(f64::to_string));
        for j in 0..names.len() {
            let ci = |c: &Option<Vec<f64>>| c.as_ref().map_or(String::new(), |v| v[j].to_string());
            cols.push((r.objectives[j] * signs[j]).to_string());
            cols.push(r.stderr.get(j).map_or(String::new(), f64::to_string));
            cols.push(ci(&r.ci_low));
            cols.push(ci(&r.ci_high));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}
