use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_base, BaseLearnerSpec, HteError, OutcomePredictor};
use crate::data::{compute_ate, AteMatrix, LogDataset};
use crate::rng::derive_seed;

/// One outcome regression per (arm, outcome); CATEs are differences
/// against the control regression, so the control contrast is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateModel {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub learner: BaseLearnerSpec,
    /// `predictors[i-1][j]` regresses outcome `j` on arm-`i` records.
    pub predictors: Vec<Vec<OutcomePredictor>>,
    pub ate: AteMatrix,
}

impl CateModel {
    /// Number of non-trivial CATE contrasts, `m (n - 1)`.
    pub fn contrast_count(&self) -> usize {
        self.m * (self.n - 1)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), HteError> {
        if x.len() != self.d {
            return Err(HteError::Dimension { expected: self.d, got: x.len() });
        }
        Ok(())
    }

    /// Per-arm outcome predictions, n×m.
    pub fn predict_outcomes(&self, x: &[f64]) -> Result<DMatrix<f64>, HteError> {
        self.check_dim(x)?;
        Ok(DMatrix::from_fn(self.n, self.m, |i, j| self.predictors[i][j].predict(x)))
    }

    /// CATE estimates, n×m; row 0 (control) is exactly zero.
    pub fn predict_cate(&self, x: &[f64]) -> Result<DMatrix<f64>, HteError> {
        let mu = self.predict_outcomes(x)?;
        Ok(cate_from_outcomes(&mu))
    }

    /// Single contrast `tau_{arm, outcome}(x)` (arm 1-based).
    pub fn cate(&self, arm: usize, outcome: usize, x: &[f64]) -> f64 {
        if arm == 1 {
            return 0.0;
        }
        self.predictors[arm - 1][outcome].predict(x) - self.predictors[0][outcome].predict(x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HteError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Subtracts the control row from every row.
pub(crate) fn cate_from_outcomes(mu: &DMatrix<f64>) -> DMatrix<f64> {
    let mut tau = mu.clone();
    for i in 0..tau.nrows() {
        for j in 0..tau.ncols() {
            tau[(i, j)] = if i == 0 { 0.0 } else { mu[(i, j)] - mu[(0, j)] };
        }
    }
    tau
}

pub fn fit_t_learner(
    train: &LogDataset,
    spec: &BaseLearnerSpec,
    seed: u64,
) -> Result<CateModel, HteError> {
    spec.validate()?;
    let ate = compute_ate(train)?;
    let (n, m) = (train.n, train.m);
    let mut by_arm: Vec<Vec<&crate::data::UnitRecord>> = vec![Vec::new(); n];
    for r in &train.records {
        by_arm[r.arm - 1].push(r);
    }
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let fitted: Vec<Result<OutcomePredictor, HteError>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let x: Vec<Vec<f64>> = by_arm[i].iter().map(|r| r.covariates.clone()).collect();
            let y: Vec<f64> = by_arm[i].iter().map(|r| r.outcomes[j]).collect();
            fit_base(&x, &y, spec, derive_seed(seed, (i * m + j) as u64))
        })
        .collect();
    let mut predictors: Vec<Vec<OutcomePredictor>> = vec![Vec::with_capacity(m); n];
    for ((i, _), p) in jobs.into_iter().zip(fitted) {
        predictors[i].push(p?);
    }
    Ok(CateModel { n, m, d: train.d, learner: spec.clone(), predictors, ate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub arm: usize,
    pub outcome: usize,
    pub mean_prediction: f64,
    pub sample_ate: f64,
    pub abs_gap: f64,
    /// `abs_gap / |sample_ate|`; absent when the sample ATE is zero.
    pub rel_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationReport {
    pub fn max_abs_gap(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, e| a.max(e.abs_gap))
    }
}

/// Mean CATE prediction over the log's covariates vs the log's sample ATE.
/// A diagnostic only: nothing guarantees T-learner calibration.
pub fn calibration_report(model: &CateModel, log: &LogDataset) -> Result<CalibrationReport, HteError> {
    if log.n != model.n || log.m != model.m || log.d != model.d {
        return Err(HteError::Dimension { expected: model.d, got: log.d });
    }
    let sample_ate = compute_ate(log).unwrap_or_else(|_| model.ate.clone());
    let mut sums = DMatrix::<f64>::zeros(model.n, model.m);
    for r in &log.records {
        sums += model.predict_cate(&r.covariates)?;
    }
    let count = log.len().max(1) as f64;
    let mut entries = Vec::new();
    for arm in 2..=model.n {
        for j in 0..model.m {
            let mean_prediction = sums[(arm - 1, j)] / count;
            let ate = sample_ate.get(arm, j);
            let abs_gap = (mean_prediction - ate).abs();
            entries.push(CalibrationEntry {
                arm,
                outcome: j,
                mean_prediction,
                sample_ate: ate,
                abs_gap,
                rel_gap: (ate != 0.0).then(|| abs_gap / ate.abs()),
            });
        }
    }
    Ok(CalibrationReport { entries })
}
