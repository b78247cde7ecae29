//! Outcome regressions and the T-learner CATE model.

mod gbt;
mod ridge;
mod tlearner;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gbt::{Node, RegressionTree};
pub use ridge::fit_ridge;
pub use tlearner::{
    calibration_report, fit_t_learner, CalibrationEntry, CalibrationReport, CateModel,
};

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum HteError {
    #[error("design matrix is rank deficient; use a positive ridge penalty")]
    RankDeficient,
    #[error("invalid learner spec: {0}")]
    InvalidSpec(String),
    #[error("empty training set")]
    Empty,
    #[error("covariate length {got} does not match d = {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseLearnerSpec {
    Ridge {
        lambda: f64,
    },
    Gbt {
        tree_count: usize,
        max_depth: usize,
        learning_rate: f64,
        min_samples_leaf: usize,
    },
}

impl BaseLearnerSpec {
    pub fn validate(&self) -> Result<(), HteError> {
        match *self {
            BaseLearnerSpec::Ridge { lambda } if !(lambda >= 0.0) => {
                Err(HteError::InvalidSpec(format!("ridge penalty {lambda} < 0")))
            }
            BaseLearnerSpec::Gbt { tree_count, max_depth, learning_rate, .. } => {
                if tree_count < 1 {
                    Err(HteError::InvalidSpec("tree_count must be >= 1".into()))
                } else if max_depth < 1 {
                    Err(HteError::InvalidSpec("max_depth must be >= 1".into()))
                } else if !(learning_rate > 0.0 && learning_rate <= 1.0) {
                    Err(HteError::InvalidSpec(format!("learning_rate {learning_rate} not in (0, 1]")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl Default for BaseLearnerSpec {
    fn default() -> Self {
        BaseLearnerSpec::Gbt { tree_count: 100, max_depth: 3, learning_rate: 0.1, min_samples_leaf: 20 }
    }
}

/// A fitted regression `covariates -> outcome`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OutcomePredictor {
    Constant { value: f64 },
    Linear { intercept: f64, coefficients: Vec<f64> },
    Boosted { base: f64, learning_rate: f64, trees: Vec<RegressionTree> },
}

impl OutcomePredictor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            OutcomePredictor::Constant { value } => *value,
            OutcomePredictor::Linear { intercept, coefficients } => {
                intercept + coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            }
            OutcomePredictor::Boosted { base, learning_rate, trees } => {
                base + learning_rate * trees.iter().map(|t| t.predict(x)).sum::<f64>()
            }
        }
    }

    /// Mean squared training residual after each boosting round
    /// (entry 0 is the constant base). Empty for non-boosted predictors.
    pub fn boosting_losses(&self, x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let OutcomePredictor::Boosted { base, learning_rate, trees } = self else {
            return Vec::new();
        };
        let mut pred = vec![*base; y.len()];
        let mse = |p: &[f64]| p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
        let mut out = vec![mse(&pred)];
        for t in trees {
            for (p, row) in pred.iter_mut().zip(x) {
                *p += learning_rate * t.predict(row);
            }
            out.push(mse(&pred));
        }
        out
    }
}

/// Fits one regression. The learners here are deterministic; `seed` is
/// accepted so randomized learners can slot in without an API change.
pub fn fit_base(
    x: &[Vec<f64>],
    y: &[f64],
    spec: &BaseLearnerSpec,
    _seed: u64,
) -> Result<OutcomePredictor, HteError> {
    spec.validate()?;
    if y.is_empty() || x.len() != y.len() {
        return Err(HteError::Empty);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if y.iter().all(|v| *v == y[0]) {
        return Ok(OutcomePredictor::Constant { value: y[0] });
    }
    match *spec {
        BaseLearnerSpec::Ridge { lambda } => {
            let (intercept, coefficients) = fit_ridge(x, y, lambda)?;
            Ok(OutcomePredictor::Linear { intercept, coefficients })
        }
        BaseLearnerSpec::Gbt { tree_count, max_depth, learning_rate, min_samples_leaf } => {
            if y.len() < min_samples_leaf {
                log::warn!(
                    "{} rows < min_samples_leaf {min_samples_leaf}; using a constant predictor",
                    y.len()
                );
                return Ok(OutcomePredictor::Constant { value: mean });
            }
            let params = gbt::TreeParams { max_depth, min_samples_leaf };
            let mut pred = vec![mean; y.len()];
            let mut residual = vec![0.0; y.len()];
            let mut trees = Vec::with_capacity(tree_count);
            for _ in 0..tree_count {
                for ((r, p), t) in residual.iter_mut().zip(&pred).zip(y) {
                    *r = t - p;
                }
                let tree = gbt::fit_tree(x, &residual, params);
                for (p, row) in pred.iter_mut().zip(x) {
                    *p += learning_rate * tree.predict(row);
                }
                trees.push(tree);
            }
            Ok(OutcomePredictor::Boosted { base: mean, learning_rate, trees })
        }
    }
}
