//! Off-policy value estimation from randomized logs.
//!
//! All three estimators are ratio estimators over per-record terms:
//! IPSW and DR average a per-record numerator, subsampling divides matched
//! outcomes by the match count. Bootstrap resamples reuse the same terms.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LogDataset;
use crate::hte::{CateModel, HteError};
use crate::policy::{argmax_arm, decide, PolicyError, PolicyParams};
use crate::simulator::Assigner;
use crate::rng::{streams, unit_rng};

#[derive(Debug, Error)]
pub enum OpeError {
    #[error("empty log")]
    Empty,
    #[error("no matching records")]
    NoMatches,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bootstrap: {failed} of {total} resamples failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("bootstrap: {0}")]
    BadBootstrap(String),
    #[error(transparent)]
    Hte(#[from] HteError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ipsw,
    #[default]
    Dr,
    Subsample,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Ipsw => "ipsw",
            Estimator::Dr => "dr",
            Estimator::Subsample => "subsample",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpeOptions {
    /// Propensities below this are raised to it. Off by default.
    #[serde(default)]
    pub propensity_clip: Option<f64>,
}

/// Arm chosen by the evaluated policy for each log record (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentVector(pub Vec<usize>);

impl AssignmentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn constant(arm: usize, len: usize) -> Self {
        Self(vec![arm; len])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEstimate {
    pub value: f64,
    pub stderr: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub ci_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueEstimate {
    pub estimator: Estimator,
    pub n_records: usize,
    pub outcomes: Vec<OutcomeEstimate>,
    /// Bootstrap resamples on which the estimator failed (skipped).
    #[serde(default)]
    pub resample_failures: usize,
}

/// One JSON record per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub outcome: String,
    pub value: f64,
    pub stderr: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub estimator: Estimator,
    pub n_records: usize,
}

impl PolicyValueEstimate {
    pub fn values(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.value).collect()
    }

    pub fn stderrs(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.stderr).collect()
    }

    pub fn records(&self, names: &[String]) -> Vec<EstimateRecord> {
        self.outcomes
            .iter()
            .enumerate()
            .map(|(j, o)| EstimateRecord {
                outcome: names.get(j).cloned().unwrap_or_else(|| format!("y_{j}")),
                value: o.value,
                stderr: o.stderr,
                ci_low: o.ci_low,
                ci_high: o.ci_high,
                estimator: self.estimator,
                n_records: self.n_records,
            })
            .collect()
    }
}

/// Outcome-model predictions for every log record, computed once so that
/// many candidate policies can be scored cheaply.
#[derive(Debug, Clone)]
pub struct PredictionTable {
    n: usize,
    m: usize,
    mu: Vec<f64>,
}

impl PredictionTable {
    pub fn new(model: &CateModel, log: &LogDataset) -> Result<Self, OpeError> {
        if model.n != log.n || model.m != log.m || model.d != log.d {
            return Err(OpeError::Dimension(format!(
                "model (n,m,d)=({},{},{}) vs log ({},{},{})",
                model.n, model.m, model.d, log.n, log.m, log.d
            )));
        }
        let rows: Result<Vec<Vec<f64>>, HteError> = log
            .records
            .par_iter()
            .map(|r| {
                let mu = model.predict_outcomes(&r.covariates)?;
                Ok(mu.transpose().iter().copied().collect())
            })
            .collect();
        Ok(Self { n: model.n, m: model.m, mu: rows?.concat() })
    }

    /// All-zero outcome predictions.
    pub fn zeros(n: usize, m: usize, records: usize) -> Self {
        Self { n, m, mu: vec![0.0; n * m * records] }
    }

    pub fn len(&self) -> usize {
        self.mu.len() / (self.n * self.m).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Predicted outcome `outcome` for record `record` under `arm` (1-based).
    pub fn mu(&self, record: usize, arm: usize, outcome: usize) -> f64 {
        self.mu[(record * self.n + arm - 1) * self.m + outcome]
    }

    pub fn cate(&self, record: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.m, |i, j| {
            if i == 0 {
                0.0
            } else {
                self.mu(record, i + 1, j) - self.mu(record, 1, j)
            }
        })
    }

    pub fn assignments(&self, params: &PolicyParams) -> Result<AssignmentVector, OpeError> {
        if params.n() != self.n || params.m() != self.m {
            return Err(OpeError::Dimension(format!(
                "params {}×{} vs model {}×{}",
                params.n(),
                params.m(),
                self.n,
                self.m
            )));
        }
        let mut scores = vec![0.0; self.n];
        let arms = (0..self.len())
            .map(|r| {
                for (i, s) in scores.iter_mut().enumerate() {
                    // Same expression as `policy::utility` so decisions agree bitwise.
                    *s = params.biases[i]
                        + params
                            .weights
                            .iter()
                            .enumerate()
                            .map(|(j, w)| {
                                let t = if i == 0 { 0.0 } else { self.mu(r, i + 1, j) - self.mu(r, 1, j) };
                                w * t
                            })
                            .sum::<f64>();
                }
                argmax_arm(&scores)
            })
            .collect();
        Ok(AssignmentVector(arms))
    }
}

pub fn policy_assignments(
    log: &LogDataset,
    model: &CateModel,
    params: &PolicyParams,
) -> Result<AssignmentVector, OpeError> {
    PredictionTable::new(model, log)?.assignments(params)
}

/// A canonical policy applied to a fitted model's CATE predictions.
#[derive(Debug, Clone)]
pub struct ModelPolicy<'a> {
    pub model: &'a CateModel,
    pub params: PolicyParams,
}

impl<'a> ModelPolicy<'a> {
    pub fn new(model: &'a CateModel, params: PolicyParams) -> Self {
        Self { model, params }
    }
}

impl Assigner for ModelPolicy<'_> {
    fn assign(&self, x: &[f64]) -> usize {
        let tau = self.model.predict_cate(x).expect("covariate dimension matches the model");
        decide(&self.params, &tau).expect("params match the model shape")
    }
}

/// Per-record numerators and weights: estimate = Σ num / Σ weight.
struct RecordTerms {
    m: usize,
    num: Vec<f64>,
    weight: Vec<f64>,
}

impl RecordTerms {
    fn build(
        estimator: Estimator,
        log: &LogDataset,
        assignments: &AssignmentVector,
        table: Option<&PredictionTable>,
        opts: &OpeOptions,
    ) -> Result<Self, OpeError> {
        if log.is_empty() {
            return Err(OpeError::Empty);
        }
        if assignments.len() != log.len() {
            return Err(OpeError::Dimension(format!(
                "{} assignments for {} records",
                assignments.len(),
                log.len()
            )));
        }
        if let Some(&bad) = assignments.0.iter().find(|&&a| a < 1 || a > log.n) {
            return Err(OpeError::Dimension(format!("assigned arm {bad} outside [1, {}]", log.n)));
        }
        let m = log.m;
        let mut num = Vec::with_capacity(log.len() * m);
        let mut weight = Vec::with_capacity(log.len());
        for (r, (rec, &target)) in log.records.iter().zip(&assignments.0).enumerate() {
            let matched = rec.arm == target;
            let p = match opts.propensity_clip {
                Some(c) => rec.propensity.max(c),
                None => rec.propensity,
            };
            match estimator {
                Estimator::Ipsw => {
                    weight.push(1.0);
                    num.extend(rec.outcomes.iter().map(|y| if matched { y / p } else { 0.0 }));
                }
                Estimator::Subsample => {
                    weight.push(if matched { 1.0 } else { 0.0 });
                    num.extend(rec.outcomes.iter().map(|y| if matched { *y } else { 0.0 }));
                }
                Estimator::Dr => {
                    let table = table.ok_or_else(|| {
                        OpeError::Dimension("doubly-robust estimation needs an outcome model".into())
                    })?;
                    weight.push(1.0);
                    for (j, y) in rec.outcomes.iter().enumerate() {
                        let direct = table.mu(r, target, j);
                        let correction =
                            if matched { (y - table.mu(r, rec.arm, j)) / p } else { 0.0 };
                        num.push(direct + correction);
                    }
                }
            }
        }
        Ok(Self { m, num, weight })
    }

    fn point(&self, estimator: Estimator) -> Result<PolicyValueEstimate, OpeError> {
        let total_w: f64 = self.weight.iter().sum();
        if total_w == 0.0 {
            return Err(OpeError::NoMatches);
        }
        let outcomes = (0..self.m)
            .map(|j| {
                let value = self
                    .weight
                    .iter()
                    .enumerate()
                    .map(|(r, _)| self.num[r * self.m + j])
                    .sum::<f64>()
                    / total_w;
                // Plug-in: sd of the (matched) per-record terms over sqrt(count).
                let mut ss = 0.0;
                for (r, w) in self.weight.iter().enumerate() {
                    if *w > 0.0 {
                        let t = self.num[r * self.m + j] / w;
                        ss += (t - value).powi(2);
                    }
                }
                let stderr = if total_w > 1.0 { (ss / (total_w - 1.0) / total_w).sqrt() } else { 0.0 };
                OutcomeEstimate { value, stderr, ci_low: None, ci_high: None, ci_level: None }
            })
            .collect();
        Ok(PolicyValueEstimate {
            estimator,
            n_records: self.weight.len(),
            outcomes,
            resample_failures: 0,
        })
    }

    fn resampled(&self, idx: &[usize]) -> Option<Vec<f64>> {
        let total_w: f64 = idx.iter().map(|&r| self.weight[r]).sum();
        if total_w == 0.0 {
            return None;
        }
        Some(
            (0..self.m)
                .map(|j| idx.iter().map(|&r| self.num[r * self.m + j]).sum::<f64>() / total_w)
                .collect(),
        )
    }
}

/// Point estimate with any of the three estimators. `table` is required
/// for doubly-robust estimation.
pub fn estimate(
    estimator: Estimator,
    log: &LogDataset,
    assignments: &AssignmentVector,
    table: Option<&PredictionTable>,
    opts: &OpeOptions,
) -> Result<PolicyValueEstimate, OpeError> {
    RecordTerms::build(estimator, log, assignments, table, opts)?.point(estimator)
}

pub fn ipsw_value(log: &LogDataset, assignments: &AssignmentVector) -> Result<PolicyValueEstimate, OpeError> {
    estimate(Estimator::Ipsw, log, assignments, None, &OpeOptions::default())
}

pub fn dr_value(
    log: &LogDataset,
    assignments: &AssignmentVector,
    model: &CateModel,
) -> Result<PolicyValueEstimate, OpeError> {
    let table = PredictionTable::new(model, log)?;
    estimate(Estimator::Dr, log, assignments, Some(&table), &OpeOptions::default())
}

/// Mean outcome over records whose logged arm matches the policy.
pub fn subsample_value(
    log: &LogDataset,
    assignments: &AssignmentVector,
) -> Result<PolicyValueEstimate, OpeError> {
    estimate(Estimator::Subsample, log, assignments, None, &OpeOptions::default())
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 200, level: 0.95, seed: 0 }
    }
}

/// Percentile bootstrap over resampled records. Resamples on which the
/// estimator fails are skipped; more than 10% failures is an error.
pub fn bootstrap_ci(
    estimator: Estimator,
    log: &LogDataset,
    assignments: &AssignmentVector,
    table: Option<&PredictionTable>,
    opts: &OpeOptions,
    config: BootstrapConfig,
) -> Result<PolicyValueEstimate, OpeError> {
    if config.resamples < 100 {
        return Err(OpeError::BadBootstrap(format!("need >= 100 resamples, got {}", config.resamples)));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(OpeError::BadBootstrap(format!("level {} not in (0, 1)", config.level)));
    }
    let terms = RecordTerms::build(estimator, log, assignments, table, opts)?;
    let mut point = terms.point(estimator)?;
    let count = log.len();
    let draws: Vec<Option<Vec<f64>>> = (0..config.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = unit_rng(config.seed, streams::BOOTSTRAP, b as u64);
            let idx: Vec<usize> = (0..count).map(|_| rng.random_range(0..count)).collect();
            terms.resampled(&idx)
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let failed = config.resamples - ok.len();
    if failed * 10 > config.resamples {
        return Err(OpeError::TooManyFailures { failed, total: config.resamples });
    }
    let lo_q = 0.5 * (1.0 - config.level);
    let hi_q = 1.0 - lo_q;
    for (j, out) in point.outcomes.iter_mut().enumerate() {
        let mut vals: Vec<f64> = ok.iter().map(|v| v[j]).collect();
        vals.sort_by(f64::total_cmp);
        // The interval always brackets the full-sample estimate.
        out.ci_low = Some(quantile(&vals, lo_q).min(out.value));
        out.ci_high = Some(quantile(&vals, hi_q).max(out.value));
        out.ci_level = Some(config.level);
    }
    point.resample_failures = failed;
    Ok(point)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
